#!/usr/bin/env python3
"""
Seed Label Module
=================

Turns scene-level labels into superpoint seed labels:

1. a fixed 16-dim descriptor per superpoint,
2. a linear multi-label scene classifier trained on the descriptor mean of
   each scene (global average pooling),
3. class activation maps ``M_c(s_k) = w_c . f(s_k)``,
4. the most confident fraction of superpoints as seeds.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from src.core.cutpursuit import SuperpointPartition
from src.core.geomfeat import GeomFeatures
from src.core.numcore import ParameterSet
from src.core.synthdata import LabeledCloud
from src.utils.errors import (CloudIoError, EmptyCorpus, EmptySceneLabels, ParseError,
                              ShapeMismatch)

logger = logging.getLogger(__name__)

DESCRIPTOR_DIM = 16
DESCRIPTOR_NAMES = (
    "mean_linearity", "mean_planarity", "mean_scattering", "mean_verticality",
    "std_linearity", "std_planarity", "std_scattering", "std_verticality",
    "mean_r", "mean_g", "mean_b",
    "extent_x", "extent_y", "extent_z",
    "mean_height", "log_size",
)
DEFAULT_SEED_FRACTION = 0.4


@dataclass(frozen=True)
class SuperpointDescriptorSet:
    """One descriptor row per superpoint."""
    values: np.ndarray

    @property
    def n_superpoints(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class SceneClassifier:
    weights: np.ndarray
    bias: np.ndarray
    training_log: Tuple[float, ...] = field(default=(), compare=False)

    @property
    def n_categories(self) -> int:
        return int(self.weights.shape[0])

    def predict_proba(self, descriptors: SuperpointDescriptorSet) -> np.ndarray:
        """Scene-level category probabilities from pooled descriptors."""
        pooled = descriptors.values.mean(axis=0)
        return _sigmoid(self.weights @ pooled + self.bias)


@dataclass(frozen=True)
class SeedSet:
    """(superpoint, category, score) triples for one scene, best first."""
    entries: Tuple[Tuple[int, int, float], ...]
    scene_id: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def superpoints(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=np.int64)

    @property
    def categories(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=np.int64)

    def by_category(self) -> Dict[int, List[int]]:
        groups: Dict[int, List[int]] = {}
        for superpoint, category, _ in self.entries:
            groups.setdefault(category, []).append(superpoint)
        return groups


def _group_stat(assignment: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    return np.stack([np.bincount(assignment, weights=values[:, a], minlength=n_groups)
                     for a in range(values.shape[1])], axis=1)


def superpoint_descriptor(cloud: LabeledCloud, features: GeomFeatures,
                          partition: SuperpointPartition) -> SuperpointDescriptorSet:
    """
    Hand-crafted superpoint descriptor f(s)

    Columns: mean and std of the four geometric features, mean color,
    bounding-box extents, mean height above the cloud's lowest point and
    log point count over log cloud size.

    Args:
        cloud (LabeledCloud): Source cloud
        features (GeomFeatures): Per-point geometric features
        partition (SuperpointPartition): Point-to-superpoint assignment

    Returns:
        SuperpointDescriptorSet: (N, 16) matrix
    """
    n = cloud.n_points
    if len(features) != n or len(partition.assignment) != n:
        raise ShapeMismatch("cloud, features and partition sizes differ")
    a = partition.assignment
    n_sp = partition.n_superpoints
    counts = np.bincount(a, minlength=n_sp).astype(np.float64)

    geo = features.values
    geo_mean = _group_stat(a, geo, n_sp) / counts[:, None]
    centered = geo - geo_mean[a]
    geo_std = np.sqrt(_group_stat(a, centered * centered, n_sp) / counts[:, None])
    color_mean = _group_stat(a, cloud.colors, n_sp) / counts[:, None]

    lo = np.full((n_sp, 3), np.inf)
    hi = np.full((n_sp, 3), -np.inf)
    np.minimum.at(lo, a, cloud.points)
    np.maximum.at(hi, a, cloud.points)
    extents = hi - lo

    height = cloud.points[:, 2:3] - cloud.points[:, 2].min()
    mean_height = _group_stat(a, height, n_sp) / counts[:, None]
    log_size = (np.log(counts) / math.log(n))[:, None] if n > 1 else np.zeros((n_sp, 1))

    values = np.hstack([geo_mean, geo_std, color_mean, extents, mean_height, log_size])
    return SuperpointDescriptorSet(values=values)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _scene_targets(scene_labels: Iterable[int], n_categories: int) -> np.ndarray:
    y = np.zeros(n_categories)
    for c in scene_labels:
        y[int(c)] = 1.0
    return y


def _bce(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-scene sigmoid cross-entropy summed over categories (numerically stable)."""
    per_entry = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return per_entry.sum(axis=1)


def train_scene_classifier(descriptor_sets: Sequence[SuperpointDescriptorSet],
                           scene_labels: Sequence[Iterable[int]], n_categories: int,
                           epochs: int = 500, lr: float = 0.003) -> SceneClassifier:
    """
    Fit the multi-label scene classifier on pooled superpoint descriptors

    Args:
        descriptor_sets: One descriptor set per scene
        scene_labels: Category set per scene
        n_categories (int): Size of the shared category space
        epochs (int): Full-batch Adam steps
        lr (float): Adam learning rate

    Returns:
        SceneClassifier: Weights start at zero; ``training_log`` holds the
        mean per-scene loss before each update
    """
    if not descriptor_sets:
        raise EmptyCorpus("scene classifier needs at least one scene")
    if len(descriptor_sets) != len(scene_labels):
        raise ShapeMismatch("one label set per descriptor set is required")
    pooled = np.stack([d.values.mean(axis=0) for d in descriptor_sets])
    targets = np.stack([_scene_targets(labels, n_categories) for labels in scene_labels])
    n_scenes = len(pooled)

    params = ParameterSet({"weights": np.zeros((n_categories, pooled.shape[1])),
                           "bias": np.zeros(n_categories)})
    log: List[float] = []
    for _ in range(epochs):
        logits = pooled @ params.params["weights"].T + params.params["bias"]
        log.append(float(_bce(logits, targets).mean()))
        residual = (_sigmoid(logits) - targets) / n_scenes
        params.step({"weights": residual.T @ pooled, "bias": residual.sum(axis=0)}, lr)

    classifier = SceneClassifier(params.params["weights"], params.params["bias"], tuple(log))
    if log:
        logger.info("scene classifier: %d scenes, loss %.4f -> %.4f", n_scenes, log[0], log[-1])
    return classifier


def class_activation_map(classifier: SceneClassifier, descriptors: SuperpointDescriptorSet) -> np.ndarray:
    """
    Class activation map per superpoint and category (no bias term)

    Returns:
        np.ndarray: (N, C) matrix with entry (k, c) = w_c . f(s_k)
    """
    if descriptors.values.shape[1] != classifier.weights.shape[1]:
        raise ShapeMismatch(f"descriptor width {descriptors.values.shape[1]} "
                            f"vs classifier width {classifier.weights.shape[1]}")
    return descriptors.values @ classifier.weights.T


def seed_count(fraction: float, n_superpoints: int) -> int:
    # round first so that e.g. 0.4 * 10 does not become 5
    return min(n_superpoints, int(math.ceil(round(fraction * n_superpoints, 9))))


def select_seeds(cam: np.ndarray, scene_labels: Iterable[int], fraction: float = DEFAULT_SEED_FRACTION,
                 scene_id: int = 0) -> SeedSet:
    """
    Keep the most confident superpoints as seeds

    Args:
        cam (np.ndarray): (N, C) activation map
        scene_labels: Categories present in the scene; the argmax is restricted to them
        fraction (float): Share of superpoints to keep, in (0, 1]
        scene_id (int): Provenance tag

    Returns:
        SeedSet: ceil(fraction * N) entries ranked by activation, ties to the lower index
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"seed fraction must be in (0, 1], got {fraction}")
    allowed = np.array(sorted(int(c) for c in scene_labels), dtype=np.int64)
    if allowed.size == 0:
        raise EmptySceneLabels(f"scene {scene_id} has no scene labels")
    cam = np.asarray(cam, dtype=np.float64)
    masked = cam[:, allowed]
    best = np.argmax(masked, axis=1)
    scores = masked[np.arange(len(cam)), best]
    categories = allowed[best]
    order = np.lexsort((np.arange(len(cam)), -scores))
    keep = order[:seed_count(fraction, len(cam))]
    entries = tuple((int(k), int(categories[k]), float(scores[k])) for k in keep)
    return SeedSet(entries=entries, scene_id=scene_id)


def write_seeds(seed_sets: Sequence[SeedSet], path: str) -> None:
    """One line per seed: ``scene_id superpoint_id category score``."""
    lines = [f"{s.scene_id} {sp} {cat} {score!r}" for s in seed_sets for sp, cat, score in s.entries]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    except OSError as e:
        raise CloudIoError(f"cannot write seeds to '{path}': {e}") from e


def read_seeds(path: str) -> List[SeedSet]:
    if not os.path.isfile(path):
        raise CloudIoError(f"seed file '{path}' not found")
    groups: Dict[int, List[Tuple[int, int, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 4:
                raise ParseError(line_no, line.strip(), f"line {line_no}: expected 4 fields")
            try:
                scene, sp, cat = (int(t) for t in tokens[:3])
            except ValueError:
                bad = next(t for t in tokens[:3] if not t.lstrip("-").isdigit())
                raise ParseError(line_no, bad) from None
            try:
                score = float(tokens[3])
            except ValueError:
                raise ParseError(line_no, tokens[3]) from None
            groups.setdefault(scene, []).append((sp, cat, score))
    return [SeedSet(entries=tuple(entries), scene_id=scene) for scene, entries in sorted(groups.items())]
