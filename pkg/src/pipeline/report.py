#!/usr/bin/env python3
"""
Evaluation Report
=================

JSON report with a version tag and fixed key order. Stage wall-clock times
are written next to it as ``<report stem>.timings.csv`` so that reports of
identical runs compare byte for byte.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from src.utils.errors import ParseError, ReportIoError

logger = logging.getLogger(__name__)

REPORT_FORMAT = "WHCN-REPORT v1"


@dataclass
class EvalReport:
    category_names: Tuple[str, ...]
    per_category_iou: Dict[str, Optional[float]]
    miou: float
    seed_miou: float
    propagation_miou: Optional[float]
    seed_coverage: float
    config: Dict[str, Any]
    stages: Dict[str, Dict[str, Any]]
    timings: Dict[str, float] = field(default_factory=dict, compare=False)
    format: str = REPORT_FORMAT

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": self.format,
            "config": to_plain(self.config),
            "category_names": list(self.category_names),
            "per_category_iou": to_plain(self.per_category_iou),
            "miou": float(self.miou),
            "seed_miou": float(self.seed_miou),
            "propagation_miou": None if self.propagation_miou is None else float(self.propagation_miou),
            "seed_coverage": float(self.seed_coverage),
            "stages": to_plain(self.stages),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], timings: Optional[Dict[str, float]] = None) -> "EvalReport":
        return cls(category_names=tuple(data["category_names"]),
                   per_category_iou=dict(data["per_category_iou"]),
                   miou=data["miou"], seed_miou=data["seed_miou"],
                   propagation_miou=data["propagation_miou"], seed_coverage=data["seed_coverage"],
                   config=dict(data["config"]), stages=dict(data["stages"]),
                   timings=dict(timings or {}), format=data["format"])

    def iou_table(self) -> pd.DataFrame:
        return pd.DataFrame({"category": list(self.per_category_iou),
                             "iou": [np.nan if v is None else v for v in self.per_category_iou.values()]})


def to_plain(value: Any) -> Any:
    """Convert numpy scalars, arrays and tuples to JSON-ready Python values."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def format_report(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def timings_path(path: str) -> str:
    return os.path.splitext(path)[0] + ".timings.csv"


def emit_report(report: EvalReport, path: str) -> None:
    """
    Write the report and its timing sidecar

    Args:
        report (EvalReport): Report to write
        path (str): Target file; its directory must exist

    Raises:
        ReportIoError: Directory missing or file not writable
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise ReportIoError(f"cannot write report '{path}': directory '{directory}' does not exist")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_report(report))
        if report.timings:
            frame = pd.DataFrame({"stage": list(report.timings), "seconds": list(report.timings.values())})
            frame.to_csv(timings_path(path), index=False)
    except OSError as e:
        raise ReportIoError(f"cannot write report '{path}': {e}") from e
    logger.info("report written to %s", path)


def load_report(path: str) -> EvalReport:
    if not os.path.isfile(path):
        raise ReportIoError(f"report '{path}' not found")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(e.lineno, e.doc[e.pos:e.pos + 20], f"line {e.lineno}: {e.msg}") from None
    if data.get("format") != REPORT_FORMAT:
        raise ParseError(1, str(data.get("format")), f"expected format '{REPORT_FORMAT}'")
    timings = None
    sidecar = timings_path(path)
    if os.path.isfile(sidecar):
        frame = pd.read_csv(sidecar)
        timings = dict(zip(frame["stage"], frame["seconds"].astype(float)))
    return EvalReport.from_dict(data, timings)


def emit_ablation(result, path: str) -> str:
    """
    Write an ablation result as JSON at ``path`` and as a wide CSV table next to it

    Returns:
        str: Path of the CSV table
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise ReportIoError(f"cannot write ablation '{path}': directory '{directory}' does not exist")
    csv_path = os.path.splitext(path)[0] + ".csv"
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(to_plain(result.to_dict()), indent=2, allow_nan=False) + "\n")
        result.table().to_csv(csv_path, index=False)
    except OSError as e:
        raise ReportIoError(f"cannot write ablation '{path}': {e}") from e
    return csv_path
