#!/usr/bin/env python3
"""
Synthetic Scene Module
======================

Generates labeled indoor-style scenes (floor and wall planes plus box and
cluster objects) and reads/writes the WHCN-CLOUD v1 text format.

Ground-truth point labels are kept on the cloud for evaluation only; the
training stages consume ``scene_labels``.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import CloudIoError, EmptyCloud, InvalidConfig, ParseError

logger = logging.getLogger(__name__)

CLOUD_MAGIC = "WHCN-CLOUD"
CLOUD_VERSION = "v1"

CATEGORY_NAMES: Tuple[str, ...] = ("floor", "wall", "table", "chair", "cabinet", "clutter")

# Base RGB per category of the default catalog.
CATEGORY_COLORS: Tuple[Tuple[float, float, float], ...] = (
    (0.55, 0.45, 0.35),
    (0.85, 0.85, 0.80),
    (0.60, 0.35, 0.15),
    (0.20, 0.30, 0.60),
    (0.40, 0.40, 0.40),
    (0.70, 0.20, 0.25),
)

PRIMITIVE_KINDS = ("plane", "box", "cluster")


@dataclass(frozen=True)
class Primitive:
    """One generating shape. ``extent`` is the full size per axis in meters."""
    kind: str
    category: int
    center: Tuple[float, float, float]
    extent: Tuple[float, float, float]
    noise: float = 0.01
    color: Optional[Tuple[float, float, float]] = None

    def area(self) -> float:
        ex, ey, ez = (abs(v) for v in self.extent)
        if self.kind == "plane":
            dims = sorted((ex, ey, ez), reverse=True)
            return max(dims[0] * dims[1], 1e-6)
        if self.kind == "box":
            return max(2.0 * (ex * ey + ey * ez + ex * ez), 1e-6)
        r = (ex + ey + ez) / 6.0
        return max(4.0 * math.pi * r * r, 1e-6)


@dataclass(frozen=True)
class SceneConfig:
    rng_seed: int
    points_per_scene: int
    primitives: Tuple[Primitive, ...]
    category_names: Tuple[str, ...] = CATEGORY_NAMES

    def allocations(self) -> List[int]:
        """Points per primitive, proportional to surface area, summing to points_per_scene."""
        areas = np.array([p.area() for p in self.primitives], dtype=np.float64)
        raw = areas / areas.sum() * self.points_per_scene
        counts = np.floor(raw).astype(int)
        remainder = self.points_per_scene - int(counts.sum())
        # largest remainder; ties go to the earlier primitive
        order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - counts[k]), k))
        for k in order[:remainder]:
            counts[k] += 1
        return [int(c) for c in counts]


@dataclass(eq=False)
class LabeledCloud:
    points: np.ndarray
    colors: np.ndarray
    gt_labels: np.ndarray
    scene_labels: FrozenSet[int]
    category_names: Tuple[str, ...] = CATEGORY_NAMES

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.gt_labels = np.asarray(self.gt_labels, dtype=np.int64).reshape(-1)
        self.scene_labels = frozenset(int(c) for c in self.scene_labels)
        self.category_names = tuple(self.category_names)
        n = len(self.points)
        if n == 0:
            raise EmptyCloud("cloud has no points")
        if len(self.colors) != n or len(self.gt_labels) != n:
            raise InvalidConfig("points, colors and labels must have equal length")

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_categories(self) -> int:
        return len(self.category_names)

    def subset(self, indices: np.ndarray) -> "LabeledCloud":
        """Cloud restricted to ``indices``; scene labels are those of the kept points."""
        indices = np.asarray(indices, dtype=np.int64)
        part = LabeledCloud(self.points[indices], self.colors[indices], self.gt_labels[indices],
                            frozenset(), self.category_names)
        part.scene_labels = derive_scene_labels(part)
        return part

    def equals(self, other: "LabeledCloud") -> bool:
        return (np.array_equal(self.points, other.points)
                and np.array_equal(self.colors, other.colors)
                and np.array_equal(self.gt_labels, other.gt_labels)
                and self.scene_labels == other.scene_labels
                and self.category_names == other.category_names)


def _sample_plane(rng: np.random.Generator, prim: Primitive, n: int) -> np.ndarray:
    offsets = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.asarray(prim.extent)
    return np.asarray(prim.center) + offsets


def _sample_box(rng: np.random.Generator, prim: Primitive, n: int) -> np.ndarray:
    ext = np.abs(np.asarray(prim.extent, dtype=np.float64))
    # faces: (axis held fixed, side); area of a face perpendicular to axis k
    face_areas = np.array([ext[1] * ext[2], ext[0] * ext[2], ext[0] * ext[1]])
    probs = np.repeat(face_areas, 2)
    probs = probs / probs.sum() if probs.sum() > 0 else np.full(6, 1.0 / 6.0)
    faces = rng.choice(6, size=n, p=probs)
    local = rng.uniform(-0.5, 0.5, size=(n, 3)) * ext
    axis = faces // 2
    side = np.where(faces % 2 == 0, -0.5, 0.5)
    local[np.arange(n), axis] = side * ext[axis]
    return np.asarray(prim.center) + local


def _sample_cluster(rng: np.random.Generator, prim: Primitive, n: int) -> np.ndarray:
    scale = np.abs(np.asarray(prim.extent, dtype=np.float64)) / 4.0
    return np.asarray(prim.center) + rng.normal(size=(n, 3)) * scale


_SAMPLERS = {"plane": _sample_plane, "box": _sample_box, "cluster": _sample_cluster}


def validate_scene_config(config: SceneConfig) -> None:
    if config.points_per_scene <= 0:
        raise InvalidConfig("points_per_scene must be positive")
    if not config.primitives:
        raise InvalidConfig("scene needs at least one primitive")
    for prim in config.primitives:
        if prim.kind not in PRIMITIVE_KINDS:
            raise InvalidConfig(f"unknown primitive kind '{prim.kind}'")
        if not 0 <= prim.category < len(config.category_names):
            raise InvalidConfig(f"primitive category {prim.category} outside catalog")
        if prim.noise < 0:
            raise InvalidConfig("primitive noise must be non-negative")


def generate_scene(config: SceneConfig) -> LabeledCloud:
    """
    Sample a labeled scene

    Args:
        config (SceneConfig): Seed, point budget and primitive mix

    Returns:
        LabeledCloud: Deterministic in ``config``
    """
    validate_scene_config(config)
    rng = np.random.default_rng(config.rng_seed)
    points, colors, labels = [], [], []
    for prim, count in zip(config.primitives, config.allocations()):
        if count == 0:
            continue
        xyz = _SAMPLERS[prim.kind](rng, prim, count)
        xyz = xyz + rng.normal(scale=prim.noise, size=xyz.shape)
        base = prim.color
        if base is None:
            base = CATEGORY_COLORS[prim.category % len(CATEGORY_COLORS)]
        rgb = np.clip(np.asarray(base) + rng.normal(scale=0.03, size=(count, 3)), 0.0, 1.0)
        points.append(xyz)
        colors.append(rgb)
        labels.append(np.full(count, prim.category, dtype=np.int64))

    gt = np.concatenate(labels)
    cloud = LabeledCloud(np.concatenate(points), np.concatenate(colors), gt,
                         frozenset(), config.category_names)
    cloud.scene_labels = derive_scene_labels(cloud)
    logger.debug("generated scene seed=%d points=%d labels=%s",
                 config.rng_seed, cloud.n_points, sorted(cloud.scene_labels))
    return cloud


def derive_scene_labels(cloud: LabeledCloud) -> FrozenSet[int]:
    """Set of categories present in the cloud's ground truth."""
    return frozenset(int(c) for c in np.unique(cloud.gt_labels))


def random_scene_config(rng_seed: int, points_per_scene: int,
                        category_names: Sequence[str] = CATEGORY_NAMES) -> SceneConfig:
    """
    Draw a room layout: floor, one or two walls, and a random subset of objects

    Args:
        rng_seed (int): Layout seed, also used as the sampling seed
        points_per_scene (int): Point budget

    Returns:
        SceneConfig: Layout using the default six-category catalog
    """
    rng = np.random.default_rng([rng_seed, 7919])
    room_x, room_y = rng.uniform(3.0, 5.0), rng.uniform(3.0, 5.0)
    prims: List[Primitive] = [
        Primitive("plane", 0, (0.0, 0.0, 0.0), (room_x, room_y, 0.0), noise=0.005),
        Primitive("plane", 1, (0.0, room_y / 2, 1.25), (room_x, 0.0, 2.5), noise=0.005),
    ]
    if rng.random() < 0.5:
        prims.append(Primitive("plane", 1, (room_x / 2, 0.0, 1.25), (0.0, room_y, 2.5), noise=0.005))

    # object categories 2.. appear with probability 0.6 each; at least one object
    object_cats = [c for c in range(2, len(category_names)) if rng.random() < 0.6]
    if not object_cats:
        object_cats = [int(rng.integers(2, len(category_names)))]
    for cat in object_cats:
        for _ in range(int(rng.integers(1, 3))):
            cx = rng.uniform(-room_x / 2 + 0.6, room_x / 2 - 0.6)
            cy = rng.uniform(-room_y / 2 + 0.6, room_y / 2 - 1.0)
            prims.append(_object_primitive(cat, cx, cy, rng))
    return SceneConfig(rng_seed=rng_seed, points_per_scene=points_per_scene,
                       primitives=tuple(prims), category_names=tuple(category_names))


def _object_primitive(category: int, cx: float, cy: float, rng: np.random.Generator) -> Primitive:
    if category == 2:  # table: wide and flat
        ext = (rng.uniform(1.0, 1.6), rng.uniform(0.6, 1.0), 0.08)
        return Primitive("box", category, (cx, cy, 0.75), ext, noise=0.005)
    if category == 3:  # chair: small cube
        ext = (0.45, 0.45, rng.uniform(0.4, 0.5))
        return Primitive("box", category, (cx, cy, ext[2] / 2 + 0.02), ext, noise=0.005)
    if category == 4:  # cabinet: tall box
        ext = (rng.uniform(0.5, 0.9), 0.5, rng.uniform(1.2, 1.8))
        return Primitive("box", category, (cx, cy, ext[2] / 2 + 0.01), ext, noise=0.005)
    ext = (0.4, 0.4, 0.4)
    return Primitive("cluster", category, (cx, cy, 0.3), ext, noise=0.01)


def save_cloud(cloud: LabeledCloud, path: str) -> None:
    """
    Write a cloud in WHCN-CLOUD v1 format with round-trip float precision

    Args:
        cloud (LabeledCloud): Cloud to write
        path (str): Destination file
    """
    lines = [f"{CLOUD_MAGIC} {CLOUD_VERSION} {cloud.n_points} {cloud.n_categories}",
             "# names: " + " ".join(cloud.category_names)]
    for p, c, label in zip(cloud.points.tolist(), cloud.colors.tolist(), cloud.gt_labels.tolist()):
        lines.append(" ".join(repr(float(v)) for v in (*p, *c)) + f" {int(label)}")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as e:
        raise CloudIoError(f"cannot write cloud to '{path}': {e}") from e


def load_cloud(path: str) -> LabeledCloud:
    """
    Read a WHCN-CLOUD v1 file

    Args:
        path (str): Source file

    Returns:
        LabeledCloud: Parsed cloud with scene labels derived from its labels
    """
    if not os.path.isfile(path):
        raise CloudIoError(f"cloud file '{path}' not found")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as e:
        raise CloudIoError(f"cannot read cloud '{path}': {e}") from e

    if not raw_lines:
        raise ParseError(1, "", "missing WHCN-CLOUD header")
    header = raw_lines[0].split()
    if len(header) != 4 or header[0] != CLOUD_MAGIC or header[1] != CLOUD_VERSION:
        raise ParseError(1, raw_lines[0].strip(), "expected header 'WHCN-CLOUD v1 <n_points> <n_categories>'")
    counts = []
    for token in header[2:]:
        try:
            counts.append(int(token))
        except ValueError:
            raise ParseError(1, token) from None
    n_declared, n_categories = counts

    names: Optional[Tuple[str, ...]] = None
    points, colors, labels = [], [], []
    for line_no, line in enumerate(raw_lines[1:], start=2):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if stripped.startswith("# names:"):
                names = tuple(stripped[len("# names:"):].split())
            continue
        tokens = stripped.split()
        if len(tokens) != 7:
            raise ParseError(line_no, stripped, f"line {line_no}: expected 7 fields, got {len(tokens)}")
        values = []
        for token in tokens[:6]:
            try:
                values.append(float(token))
            except ValueError:
                raise ParseError(line_no, token) from None
        try:
            label = int(tokens[6])
        except ValueError:
            raise ParseError(line_no, tokens[6]) from None
        if not 0 <= label < n_categories:
            raise ParseError(line_no, tokens[6], f"line {line_no}: label {label} outside [0, {n_categories})")
        points.append(values[:3])
        colors.append(values[3:])
        labels.append(label)

    if not points:
        raise EmptyCloud(f"cloud '{path}' has no data lines")
    if len(points) != n_declared:
        logger.warning("cloud '%s' declares %d points but holds %d", path, n_declared, len(points))
    if names is None or len(names) != n_categories:
        names = CATEGORY_NAMES if n_categories == len(CATEGORY_NAMES) else tuple(
            f"class_{k}" for k in range(n_categories))
    cloud = LabeledCloud(np.array(points), np.array(colors), np.array(labels, dtype=np.int64),
                         frozenset(), names)
    cloud.scene_labels = derive_scene_labels(cloud)
    return cloud
