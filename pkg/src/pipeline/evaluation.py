"""
Pseudo-label evaluation
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.utils.errors import LengthMismatch, ShapeMismatch

UNLABELED = -1


@dataclass(frozen=True)
class IoUResult:
    """
    Per-category IoU (None where a category is absent from both prediction
    and ground truth) and the mean over categories present in ground truth.
    """
    per_category: Tuple[Optional[float], ...]
    miou: float
    gt_present: Tuple[int, ...]

    def as_table(self, category_names: Sequence[str]) -> pd.DataFrame:
        return pd.DataFrame({"category": list(category_names),
                             "iou": [np.nan if v is None else v for v in self.per_category],
                             "in_ground_truth": [c in self.gt_present for c in range(len(category_names))]})

    def named(self, category_names: Sequence[str]) -> Dict[str, Optional[float]]:
        return {name: value for name, value in zip(category_names, self.per_category)}


def evaluate_miou(predicted: np.ndarray, ground_truth: np.ndarray, n_categories: int) -> IoUResult:
    """
    Intersection over union per category

    Args:
        predicted (np.ndarray): Point labels in [0, C), or -1 for unlabeled
            points (counted as wrong)
        ground_truth (np.ndarray): Point labels in [0, C)
        n_categories (int): C

    Returns:
        IoUResult: IoU_c = |pred=c and gt=c| / |pred=c or gt=c|
    """
    predicted = np.asarray(predicted, dtype=np.int64).reshape(-1)
    ground_truth = np.asarray(ground_truth, dtype=np.int64).reshape(-1)
    if len(predicted) != len(ground_truth):
        raise LengthMismatch(f"{len(predicted)} predictions for {len(ground_truth)} ground-truth labels")
    if ground_truth.size and (ground_truth.min() < 0 or ground_truth.max() >= n_categories):
        raise ShapeMismatch(f"ground-truth labels outside [0, {n_categories})")
    if predicted.size and (predicted.min() < UNLABELED or predicted.max() >= n_categories):
        raise ShapeMismatch(f"predicted labels outside [-1, {n_categories})")

    labeled = predicted >= 0
    intersection = np.bincount(predicted[labeled & (predicted == ground_truth)], minlength=n_categories)
    pred_count = np.bincount(predicted[labeled], minlength=n_categories)
    gt_count = np.bincount(ground_truth, minlength=n_categories)
    union = pred_count + gt_count - intersection

    per_category = tuple(float(intersection[c] / union[c]) if union[c] > 0 else None
                         for c in range(n_categories))
    present = tuple(int(c) for c in np.flatnonzero(gt_count))
    miou = float(np.mean([per_category[c] for c in present])) if present else 0.0
    return IoUResult(per_category=per_category, miou=miou, gt_present=present)
