#!/usr/bin/env python3
"""
Geometric Feature Module
========================

Builds the symmetrized K-nearest-neighbor point graph and the per-point
(linearity, planarity, scattering, verticality) descriptor from the
eigenvalues of each neighborhood covariance.
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from src.utils.errors import InvalidK, ShapeMismatch, TooFewPoints

logger = logging.getLogger(__name__)

DEFAULT_K = 10
FEATURE_NAMES = ("linearity", "planarity", "scattering", "verticality")
_BRUTE_CHUNK = 256
_EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class PointGraph:
    """Undirected graph; ``edges`` is an (m, 2) int array with i < j, sorted."""
    n: int
    edges: np.ndarray
    k: int

    @property
    def n_edges(self) -> int:
        return int(len(self.edges))

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 adjacency as CSR."""
        if self.n_edges == 0:
            return sparse.csr_matrix((self.n, self.n))
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * self.n_edges)
        return sparse.csr_matrix((data, (np.concatenate([i, j]), np.concatenate([j, i]))),
                                 shape=(self.n, self.n))

    def neighbors(self) -> List[np.ndarray]:
        adj = self.adjacency()
        return [adj.indices[adj.indptr[v]:adj.indptr[v + 1]] for v in range(self.n)]


@dataclass(frozen=True)
class GeomFeatures:
    """n x 4 matrix, columns in FEATURE_NAMES order, entries in [0, 1]."""
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def _squared_distances(block: np.ndarray, points: np.ndarray) -> np.ndarray:
    diff = block[:, None, :] - points[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _knn_brute(points: np.ndarray, k: int) -> np.ndarray:
    n = len(points)
    result = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _BRUTE_CHUNK):
        stop = min(start + _BRUTE_CHUNK, n)
        d2 = _squared_distances(points[start:stop], points)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps the lower index first among equal distances
        result[start:stop] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return result


def _knn_kdtree(points: np.ndarray, k: int) -> np.ndarray:
    n = len(points)
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=k + 1)
    result = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        # everything within the k-th distance, then the brute-force ordering
        radius = dist[i, -1] * (1.0 + 1e-9) + 1e-12
        candidates = np.asarray(tree.query_ball_point(points[i], r=radius), dtype=np.int64)
        candidates = np.sort(candidates[candidates != i])
        d2 = _squared_distances(points[i:i + 1], points[candidates])[0]
        order = np.argsort(d2, kind="stable")[:k]
        result[i] = candidates[order]
    return result


def knn_graph(points: np.ndarray, k: int = DEFAULT_K, backend: str = "brute") -> PointGraph:
    """
    Symmetrized K-nearest-neighbor graph

    Args:
        points (np.ndarray): (n, 3) coordinates
        k (int): Neighbors per point, 1 <= k <= n - 1
        backend (str): "brute" (chunked exact search) or "kdtree"; both break
            distance ties by lower point index

    Returns:
        PointGraph: Union of the directed k-NN relations
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    if not 1 <= k <= n - 1:
        raise InvalidK(f"K={k} outside [1, {n - 1}]")

    if backend == "brute":
        nbrs = _knn_brute(points, k)
    elif backend == "kdtree":
        nbrs = _knn_kdtree(points, k)
    else:
        raise ValueError(f"unknown k-NN backend '{backend}'")

    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = nbrs.reshape(-1)
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    keys = np.unique(lo * n + hi)
    edges = np.stack([keys // n, keys % n], axis=1)
    return PointGraph(n=n, edges=edges, k=k)


def geometric_features(points: np.ndarray, graph: PointGraph) -> GeomFeatures:
    """
    Eigenvalue features of each point's neighborhood (itself plus graph neighbors)

    Args:
        points (np.ndarray): (n, 3) coordinates the graph was built on
        graph (PointGraph): Neighborhood graph

    Returns:
        GeomFeatures: (n, 4) linearity, planarity, scattering, verticality
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if graph.n != n:
        raise ShapeMismatch(f"graph has {graph.n} vertices but cloud has {n} points")

    adj = graph.adjacency() + sparse.identity(n, format="csr")
    adj = adj.tocoo()
    rows, cols = adj.row, adj.col
    counts = np.bincount(rows, minlength=n).astype(np.float64)
    means = np.stack([np.bincount(rows, weights=points[cols, a], minlength=n) for a in range(3)],
                     axis=1) / counts[:, None]

    # centered second moments, accumulated per entry of the 3x3 covariance
    diffs = points[cols] - means[rows]
    cov = np.empty((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s = np.bincount(rows, weights=diffs[:, a] * diffs[:, b], minlength=n) / counts
            cov[:, a, b] = s
            cov[:, b, a] = s

    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    l1, l2, l3 = eigvals[:, 2], eigvals[:, 1], eigvals[:, 0]
    normal = eigvecs[:, :, 0]

    values = np.zeros((n, 4))
    ok = l1 > _EIG_FLOOR
    values[ok, 0] = (l1[ok] - l2[ok]) / l1[ok]
    values[ok, 1] = (l2[ok] - l3[ok]) / l1[ok]
    values[ok, 2] = l3[ok] / l1[ok]
    values[ok, 3] = 1.0 - np.abs(normal[ok, 2])
    values = np.clip(values, 0.0, 1.0)
    logger.debug("geometric features for %d points (%d degenerate)", n, int((~ok).sum()))
    return GeomFeatures(values=values)
