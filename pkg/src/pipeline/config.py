#!/usr/bin/env python3
"""
Pipeline Configuration
======================

Flat ``KEY=value`` files (``#`` comments) read with python-dotenv. Values are
layered: dataclass defaults, then the config file, then ``--set`` overrides,
then ``--seed``.
"""

import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Iterable, Mapping, Optional, Union, get_args, get_origin

from dotenv import dotenv_values

from src.utils.errors import InvalidConfig

logger = logging.getLogger(__name__)

KNN_BACKENDS = ("brute", "kdtree")
# an unset superpoint target means min(MAX_SUPERPOINTS, points // POINTS_PER_SUPERPOINT) per scene
MAX_SUPERPOINTS = 64
POINTS_PER_SUPERPOINT = 16
AUTO = "auto"
_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


@dataclass(frozen=True)
class PipelineConfig:
    rng_seed: int = 0
    n_scenes: int = 8
    points_per_scene: int = 600
    knn_k: int = 10
    knn_backend: str = "brute"
    rho: float = 0.03
    superpoint_target: Optional[int] = None
    seed_fraction: float = 0.4
    k_h: int = 5
    hidden_dim: int = 32
    epochs: int = 500
    lr: float = 0.003
    dropout: float = 0.5
    mu: float = 1.0
    leaky_slope: float = 0.01
    classifier_epochs: int = 500
    classifier_lr: float = 0.003
    subsample_points: int = 256
    propagation_alpha: float = 0.9
    use_superpoints: bool = True
    use_whcn: bool = True
    use_attention: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Raise InvalidConfig for the first out-of-range field."""
        checks = [
            ("rng_seed", self.rng_seed >= 0, ">= 0"),
            ("n_scenes", self.n_scenes >= 1, ">= 1"),
            ("points_per_scene", self.points_per_scene >= 20, ">= 20"),
            ("knn_k", 1 <= self.knn_k < min(self.points_per_scene, self.subsample_points), "in [1, points)"),
            ("knn_backend", self.knn_backend in KNN_BACKENDS, f"one of {', '.join(KNN_BACKENDS)}"),
            ("rho", self.rho > 0, "> 0"),
            ("superpoint_target", self.superpoint_target is None or self.superpoint_target >= 2, ">= 2 or auto"),
            ("seed_fraction", 0 < self.seed_fraction <= 1, "in (0, 1]"),
            ("k_h", self.k_h >= 1, ">= 1"),
            ("hidden_dim", 1 <= self.hidden_dim <= 1024, "in [1, 1024]"),
            ("epochs", self.epochs >= 0, ">= 0"),
            ("lr", self.lr > 0, "> 0"),
            ("dropout", 0 <= self.dropout < 1, "in [0, 1)"),
            ("mu", self.mu > 0, "> 0"),
            ("leaky_slope", 0 <= self.leaky_slope < 1, "in [0, 1)"),
            ("classifier_epochs", self.classifier_epochs >= 0, ">= 0"),
            ("classifier_lr", self.classifier_lr > 0, "> 0"),
            ("subsample_points", 2 <= self.subsample_points, ">= 2"),
            ("propagation_alpha", 0 < self.propagation_alpha < 1, "in (0, 1)"),
        ]
        for key, ok, expected in checks:
            if not ok:
                raise InvalidConfig(f"{key}={getattr(self, key)!r} must be {expected}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, values: Mapping[str, Any]) -> "PipelineConfig":
        return replace(self, **coerce_values(values))

    def superpoint_target_for(self, n_points: int) -> int:
        """Explicit ``superpoint_target``, else min(64, n_points // 16)."""
        if self.superpoint_target is not None:
            return self.superpoint_target
        return max(1, min(MAX_SUPERPOINTS, n_points // POINTS_PER_SUPERPOINT))


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _is_auto(raw: Any) -> bool:
    return raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", AUTO))


def _coerce(key: str, raw: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if get_origin(kind) is Union:
        if _is_auto(raw):
            return None
        kind = next(arg for arg in get_args(kind) if arg is not type(None))
    if raw is None:
        raise InvalidConfig(f"config key '{key}' has no value")
    if not isinstance(raw, str):
        return kind(raw)
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise InvalidConfig(f"{key}: cannot read '{raw}' as {kind.__name__}") from None


def coerce_values(values: Mapping[str, Any]) -> Dict[str, Any]:
    """Normalize keys to lower case and convert values to field types."""
    out: Dict[str, Any] = {}
    for key, raw in values.items():
        name = key.strip().lower()
        if name not in _FIELD_TYPES:
            raise InvalidConfig(f"unknown config key '{key}'")
        out[name] = _coerce(name, raw)
    return out


def parse_overrides(items: Optional[Iterable[str]]) -> Dict[str, str]:
    """Turn ``["key=value", ...]`` into a dict."""
    overrides: Dict[str, str] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise InvalidConfig(f"override '{item}' is not of the form key=value")
        overrides[key.strip()] = value
    return overrides


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise InvalidConfig(f"config file '{path}' not found")
    return coerce_values(dotenv_values(path))


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None,
                seed: Optional[int] = None) -> PipelineConfig:
    """
    Build the effective configuration

    Args:
        path (str, optional): Config file; defaults to WHCN_CONFIG when set
        overrides (Mapping, optional): ``--set`` values
        seed (int, optional): ``--seed`` value, applied last

    Returns:
        PipelineConfig: Validated configuration
    """
    path = path or os.getenv("WHCN_CONFIG")
    values: Dict[str, Any] = {}
    if path:
        values.update(read_config_file(path))
        logger.debug("loaded %d keys from %s", len(values), path)
    if overrides:
        values.update(coerce_values(overrides))
    if seed is not None:
        values["rng_seed"] = int(seed)
    return PipelineConfig(**values)


def format_config(config: PipelineConfig) -> str:
    """Render a config in the file format read by ``load_config``."""
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif value is None:
            value = AUTO
        lines.append(f"{key.upper()}={value}")
    return "\n".join(lines) + "\n"
