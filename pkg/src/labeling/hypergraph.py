#!/usr/bin/env python3
"""
Hypergraph Module
=================

Hypergraph over superpoint vertices. Class hyperedges group the seeds of one
category; k-NN hyperedges group each vertex with its nearest neighbors in
descriptor space so that unlabeled vertices are reachable.

Provides incidence and degree matrices, the normalized Laplacian
``I - D^-1/2 H W B^-1 H^T D^-1/2`` (zero-degree vertices use 0 in place of
d^-1/2), its spectrum, and a closed-form label propagation baseline.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from src.core.numcore import sym_eig
from src.labeling.seeds import SeedSet, SuperpointDescriptorSet
from src.utils.errors import CloudIoError, DegenerateHyperedge, NoSeeds, ParseError, ShapeMismatch

logger = logging.getLogger(__name__)

DEFAULT_K_H = 5
HYPERGRAPH_MAGIC = "WHCN-HYPERGRAPH"
HYPERGRAPH_VERSION = "v1"


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """
    Vertices are superpoints; hyperedges are columns of ``incidence``.

    ``edge_kind`` tags each hyperedge as ``class:<category>`` or
    ``knn:<center vertex>``.
    """
    n_vertices: int
    incidence: np.ndarray
    weights: np.ndarray
    edge_kind: Tuple[str, ...]
    labeled_vertices: Tuple[Tuple[int, int], ...] = ()
    warnings: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.incidence.shape != (self.n_vertices, len(self.weights)):
            raise ShapeMismatch(f"incidence {self.incidence.shape} vs "
                                f"{self.n_vertices} vertices x {len(self.weights)} weights")
        if len(self.edge_kind) != len(self.weights):
            raise ShapeMismatch("one kind tag per hyperedge is required")

    @property
    def n_edges(self) -> int:
        return int(self.incidence.shape[1])

    def members(self, e: int) -> np.ndarray:
        return np.flatnonzero(self.incidence[:, e])

    def with_weights(self, weights: np.ndarray) -> "Hypergraph":
        return replace(self, weights=np.asarray(weights, dtype=np.float64))

    def select_edges(self, keep: np.ndarray) -> "Hypergraph":
        """Sub-hypergraph holding only the hyperedges where ``keep`` is True."""
        keep = np.asarray(keep, dtype=bool)
        return replace(self, incidence=self.incidence[:, keep], weights=self.weights[keep],
                       edge_kind=tuple(k for k, flag in zip(self.edge_kind, keep) if flag))

    def class_edges(self) -> "Hypergraph":
        return self.select_edges(np.array([k.startswith("class:") for k in self.edge_kind], dtype=bool))


def _nearest(values: np.ndarray, k: int) -> np.ndarray:
    """k nearest rows per row by Euclidean distance, ties to the lower index."""
    diff = values[:, None, :] - values[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def build_hypergraph(seeds: SeedSet, descriptors: SuperpointDescriptorSet,
                     k_h: int = DEFAULT_K_H) -> Hypergraph:
    """
    Class hyperedges from seeds plus one k-NN hyperedge per vertex

    Args:
        seeds (SeedSet): Seed labels of the scene
        descriptors (SuperpointDescriptorSet): Vertex descriptors (k-NN space)
        k_h (int): Neighbors per k-NN hyperedge (clamped to N - 1)

    Returns:
        Hypergraph: All weights 1; class hyperedges with fewer than two seeds
        are dropped and recorded in ``warnings``
    """
    n = descriptors.n_superpoints
    if len(seeds) == 0:
        raise NoSeeds(f"scene {seeds.scene_id} has no seeds")
    if n < 2:
        raise DegenerateHyperedge(f"hypergraph needs at least 2 vertices, got {n}")
    if k_h < 1:
        raise ValueError(f"k_h must be at least 1, got {k_h}")

    columns: List[np.ndarray] = []
    kinds: List[str] = []
    warnings: List[str] = []
    for category, members in sorted(seeds.by_category().items()):
        members = sorted(set(members))
        if len(members) < 2:
            message = f"category {category} has a single seed; class hyperedge dropped"
            logger.warning("scene %d: %s", seeds.scene_id, message)
            warnings.append(message)
            continue
        col = np.zeros(n)
        col[members] = 1.0
        columns.append(col)
        kinds.append(f"class:{category}")

    k_eff = min(k_h, n - 1)
    neighbors = _nearest(descriptors.values, k_eff)
    for v in range(n):
        col = np.zeros(n)
        col[v] = 1.0
        col[neighbors[v]] = 1.0
        columns.append(col)
        kinds.append(f"knn:{v}")

    incidence = np.stack(columns, axis=1)
    labeled = tuple((int(sp), int(cat)) for sp, cat, _ in seeds.entries)
    return Hypergraph(n_vertices=n, incidence=incidence, weights=np.ones(len(kinds)),
                      edge_kind=tuple(kinds), labeled_vertices=labeled, warnings=tuple(warnings))


def vertex_degrees(hg: Hypergraph) -> np.ndarray:
    """d(v) = sum_e w(e) h(v, e)"""
    return hg.incidence @ hg.weights


def hyperedge_degrees(hg: Hypergraph) -> np.ndarray:
    """b(e) = sum_v h(v, e)"""
    return hg.incidence.sum(axis=0)


def inverse_sqrt_degrees(degrees: np.ndarray) -> np.ndarray:
    """d^-1/2 with 0 for zero-degree vertices."""
    out = np.zeros_like(degrees, dtype=np.float64)
    positive = degrees > 0
    out[positive] = 1.0 / np.sqrt(degrees[positive])
    return out


def propagation_operator(incidence: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    D^-1/2 H W B^-1 H^T D^-1/2 for the given hyperedge weights

    Returns:
        np.ndarray: (N, N) symmetric matrix
    """
    b = incidence.sum(axis=0)
    if np.any(b < 2):
        raise DegenerateHyperedge("every hyperedge needs at least two vertices")
    dinv = inverse_sqrt_degrees(incidence @ weights)
    scaled = incidence * (weights / b)
    mixing = scaled @ incidence.T
    return dinv[:, None] * mixing * dinv[None, :]


def hypergraph_laplacian(hg: Hypergraph) -> np.ndarray:
    """Normalized Laplacian I - D^-1/2 H W B^-1 H^T D^-1/2."""
    op = propagation_operator(hg.incidence, hg.weights)
    return np.eye(hg.n_vertices) - op


def hypergraph_spectrum(hg: Hypergraph) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending Laplacian eigenvalues and the eigenvector basis U."""
    return sym_eig(hypergraph_laplacian(hg))


def hypergraph_fourier(hg: Hypergraph, signal: np.ndarray) -> np.ndarray:
    """Graph Fourier coefficients U^T x of a vertex signal."""
    _, basis = hypergraph_spectrum(hg)
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape[0] != hg.n_vertices:
        raise ShapeMismatch(f"signal has {signal.shape[0]} rows, hypergraph {hg.n_vertices} vertices")
    return basis.T @ signal


def propagate_labels(hg: Hypergraph, n_categories: int, alpha: float = 0.9) -> np.ndarray:
    """
    Closed-form transductive propagation F = (1 - alpha)(I - alpha A)^-1 Y

    Args:
        hg (Hypergraph): Hypergraph with seed labels
        n_categories (int): Number of columns of Y
        alpha (float): Propagation strength in (0, 1)

    Returns:
        np.ndarray: (N, C) scores; all-zero rows are vertices no seed reaches
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    y = np.zeros((hg.n_vertices, n_categories))
    for v, c in hg.labeled_vertices:
        y[v, c] = 1.0
    op = propagation_operator(hg.incidence, hg.weights)
    return (1.0 - alpha) * np.linalg.solve(np.eye(hg.n_vertices) - alpha * op, y)


def format_hypergraph(hg: Hypergraph) -> str:
    lines = [f"{HYPERGRAPH_MAGIC} {HYPERGRAPH_VERSION} {hg.n_vertices} {hg.n_edges}"]
    if hg.labeled_vertices:
        lines.append("# labeled " + " ".join(f"{v}:{c}" for v, c in hg.labeled_vertices))
    for e in range(hg.n_edges):
        members = " ".join(str(int(v)) for v in hg.members(e))
        lines.append(f"{hg.edge_kind[e]} {float(hg.weights[e])!r} {members}")
    return "\n".join(lines) + "\n"


def dump_hypergraph(hg: Hypergraph, path: str) -> None:
    """Write the text dump: header with vertex count, then kind, weight and members per hyperedge."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_hypergraph(hg))
    except OSError as e:
        raise CloudIoError(f"cannot write hypergraph to '{path}': {e}") from e


def parse_hypergraph(text: str) -> Hypergraph:
    lines = text.splitlines()
    header = lines[0].split() if lines else []
    if len(header) != 4 or header[0] != HYPERGRAPH_MAGIC or header[1] != HYPERGRAPH_VERSION:
        raise ParseError(1, lines[0] if lines else "", "expected WHCN-HYPERGRAPH v1 header")
    n = int(header[2])
    columns, weights, kinds = [], [], []
    labeled: List[Tuple[int, int]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "#":
            if len(tokens) > 1 and tokens[1] == "labeled":
                labeled = [tuple(int(x) for x in tok.split(":")) for tok in tokens[2:]]
            continue
        try:
            weight = float(tokens[1])
            members = [int(t) for t in tokens[2:]]
        except (ValueError, IndexError):
            raise ParseError(line_no, line.strip()) from None
        col = np.zeros(n)
        col[members] = 1.0
        columns.append(col)
        weights.append(weight)
        kinds.append(tokens[0])
    incidence = np.stack(columns, axis=1) if columns else np.zeros((n, 0))
    return Hypergraph(n_vertices=n, incidence=incidence, weights=np.array(weights),
                      edge_kind=tuple(kinds), labeled_vertices=tuple(labeled))


def load_hypergraph(path: str) -> Hypergraph:
    if not os.path.isfile(path):
        raise CloudIoError(f"hypergraph file '{path}' not found")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_hypergraph(fh.read())
