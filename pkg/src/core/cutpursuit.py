#!/usr/bin/env python3
"""
Cut Pursuit Partition Module
============================

Splits the point graph into connected, geometrically homogeneous superpoints
by greedily lowering the piecewise-constant energy

    E(g) = sum_i ||g_i - f_i||^2 + rho * #{(i, j) in E : g_i != g_j}

Each split is a two-label problem solved by alternating a graph min-cut
(Edmonds-Karp max-flow) with centroid updates. A brute-force enumerator
gives the exact optimum for graphs of at most nine vertices.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components, maximum_flow

from src.core.geomfeat import PointGraph
from src.utils.errors import InvalidConfig, ShapeMismatch, TooLarge

logger = logging.getLogger(__name__)

DEFAULT_RHO = 0.03
MAX_ALTERNATIONS = 5
BRUTE_FORCE_LIMIT = 9
# accepted splits must lower the energy by more than this
_GAIN_TOL = 1e-12
# flow capacities are integers; real costs are scaled into this budget
_CAPACITY_BUDGET = 2 ** 30
_MAX_SCALE = 1e6


@dataclass(frozen=True)
class PartitionEnergyParams:
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if not np.isfinite(self.rho) or self.rho < 0:
            raise InvalidConfig(f"rho must be finite and non-negative, got {self.rho}")


@dataclass(frozen=True)
class SuperpointPartition:
    """Point-to-superpoint assignment with the per-region feature means."""
    assignment: np.ndarray
    n_superpoints: int
    region_means: np.ndarray
    energy_trace: Tuple[float, ...] = field(default=(), compare=False)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_superpoints)

    def members(self) -> List[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.cumsum(self.sizes())[:-1]
        return np.split(order, bounds)


def make_partition(features: np.ndarray, labels: np.ndarray,
                   energy_trace: Tuple[float, ...] = ()) -> SuperpointPartition:
    """
    Build a partition from arbitrary region labels

    Regions are renumbered by their lowest point index so that equal
    groupings give identical partitions.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _, first = np.unique(labels, return_index=True)
    old_ids = labels[np.sort(first)]
    remap = {int(old): new for new, old in enumerate(old_ids)}
    assignment = np.array([remap[int(v)] for v in labels], dtype=np.int64)
    n_regions = len(old_ids)
    counts = np.bincount(assignment, minlength=n_regions).astype(np.float64)
    means = np.stack([np.bincount(assignment, weights=features[:, a], minlength=n_regions)
                      for a in range(features.shape[1])], axis=1) / counts[:, None]
    return SuperpointPartition(assignment=assignment, n_superpoints=n_regions,
                               region_means=means, energy_trace=tuple(energy_trace))


def _check_shapes(features: np.ndarray, graph: PointGraph) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != graph.n:
        raise ShapeMismatch(f"features {features.shape} do not match graph with {graph.n} vertices")
    return features


def partition_energy(features: np.ndarray, graph: PointGraph,
                     partition: SuperpointPartition, params: PartitionEnergyParams) -> float:
    """
    Fidelity plus boundary penalty of a partition

    Args:
        features (np.ndarray): (n, d) point features f
        graph (PointGraph): Point graph
        partition (SuperpointPartition): Regions; g_i is the region mean
        params (PartitionEnergyParams): Regularization strength

    Returns:
        float: sum ||g_i - f_i||^2 + rho * (number of cut edges)
    """
    features = _check_shapes(features, graph)
    if len(partition.assignment) != graph.n or partition.region_means.shape[1] != features.shape[1]:
        raise ShapeMismatch("partition does not match features")
    residual = partition.region_means[partition.assignment] - features
    fidelity = float(np.sum(residual * residual))
    if graph.n_edges == 0:
        return fidelity
    a = partition.assignment
    cut = int(np.count_nonzero(a[graph.edges[:, 0]] != a[graph.edges[:, 1]]))
    return fidelity + params.rho * cut


def _sse(f: np.ndarray) -> float:
    centered = f - f.mean(axis=0)
    return float(np.sum(centered * centered))


def _binary_min_cut(cost0: np.ndarray, cost1: np.ndarray, sub: sparse.coo_matrix, rho: float) -> np.ndarray:
    """
    Minimize sum_i cost_{l_i}(i) + rho * #cut edges over binary labels

    Returns a boolean array, True where the label is 1 (sink side).
    """
    m = len(cost0)
    source, sink = m, m + 1
    diff = cost1 - cost0
    cap_source = np.maximum(diff, 0.0)
    cap_sink = np.maximum(-diff, 0.0)
    total = cap_source.sum() + cap_sink.sum() + rho * sub.nnz
    scale = _MAX_SCALE if total <= 0 else min(_MAX_SCALE, _CAPACITY_BUDGET / total)

    nodes = np.arange(m)
    rows = np.concatenate([np.full(m, source), nodes, sub.row])
    cols = np.concatenate([nodes, np.full(m, sink), sub.col])
    caps = np.concatenate([cap_source, cap_sink, np.full(sub.nnz, rho)])
    caps = np.rint(caps * scale).astype(np.int32)
    keep = caps > 0
    graph = sparse.coo_matrix((caps[keep], (rows[keep], cols[keep])), shape=(m + 2, m + 2)).tocsr()
    graph.sum_duplicates()
    graph.sort_indices()

    flow = maximum_flow(graph, source, sink, method="edmonds_karp").flow
    residual = (graph - flow).tocsr()
    residual.data[residual.data < 0] = 0
    residual.eliminate_zeros()
    reached = breadth_first_order(residual, source, directed=True, return_predecessors=False)
    source_side = np.zeros(m + 2, dtype=bool)
    source_side[reached] = True
    return ~source_side[:m]


def _farthest_pair(f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Double sweep: the point farthest from the mean, then the point farthest from it."""
    a = int(np.argmax(np.sum((f - f.mean(axis=0)) ** 2, axis=1)))
    b = int(np.argmax(np.sum((f - f[a]) ** 2, axis=1)))
    return f[a].copy(), f[b].copy()


class CutPursuit:
    """
    Greedy top-down splitter

    Every region keeps its best proposed split; the split with the largest
    energy decrease is applied first, so halting at a superpoint target keeps
    the most useful cuts.
    """

    def __init__(self, features: np.ndarray, graph: PointGraph, params: PartitionEnergyParams):
        self.features = _check_shapes(features, graph)
        self.graph = graph
        self.params = params
        self.adjacency = graph.adjacency()

    def propose_split(self, idx: np.ndarray) -> Optional[Tuple[float, List[np.ndarray]]]:
        """
        Best two-label split of one region

        Args:
            idx (np.ndarray): Point indices of the region

        Returns:
            Tuple[float, List[np.ndarray]]: Energy decrease and the connected
            parts, or None when no split lowers the energy
        """
        if len(idx) < 2:
            return None
        f = self.features[idx]
        c0, c1 = _farthest_pair(f)
        if np.array_equal(c0, c1):
            return None
        sub = self.adjacency[idx][:, idx].tocoo()

        labels = None
        for _ in range(MAX_ALTERNATIONS):
            cost0 = np.sum((f - c0) ** 2, axis=1)
            cost1 = np.sum((f - c1) ** 2, axis=1)
            new_labels = _binary_min_cut(cost0, cost1, sub, self.params.rho)
            if new_labels.all() or not new_labels.any():
                break
            if labels is not None and np.array_equal(labels, new_labels):
                break
            labels = new_labels
            c0, c1 = f[~labels].mean(axis=0), f[labels].mean(axis=0)
        if labels is None:
            return None

        part_of = np.empty(len(idx), dtype=np.int64)
        parts: List[np.ndarray] = []
        sub_csr = sub.tocsr()
        for side in (False, True):
            local = np.flatnonzero(labels == side)
            n_comp, comp = connected_components(sub_csr[local][:, local], directed=False)
            for c in range(n_comp):
                part_of[local[comp == c]] = len(parts)
                parts.append(idx[local[comp == c]])

        cut = int(np.count_nonzero(part_of[sub.row] != part_of[sub.col])) // 2
        gain = _sse(f) - sum(_sse(self.features[p]) for p in parts) - self.params.rho * cut
        if gain <= _GAIN_TOL:
            return None
        return gain, parts

    def run(self, max_superpoints: Optional[int] = None) -> SuperpointPartition:
        n = self.graph.n
        n_comp, comp = connected_components(self.adjacency, directed=False)
        regions: Dict[int, np.ndarray] = {c: np.flatnonzero(comp == c) for c in range(n_comp)}
        next_id = n_comp

        energy = partition_energy(self.features, self.graph,
                                  make_partition(self.features, comp), self.params)
        trace = [energy]
        proposals = {rid: self.propose_split(idx) for rid, idx in regions.items()}

        while max_superpoints is None or len(regions) < max_superpoints:
            live = [(prop[0], rid) for rid, prop in proposals.items() if prop is not None]
            if not live:
                break
            gain, rid = max(live, key=lambda item: (item[0], -item[1]))
            parts = proposals.pop(rid)[1]
            del regions[rid]
            for part in parts:
                regions[next_id] = part
                proposals[next_id] = self.propose_split(part)
                next_id += 1
            energy -= gain
            trace.append(energy)

        labels = np.empty(n, dtype=np.int64)
        for rid, idx in regions.items():
            labels[idx] = rid
        partition = make_partition(self.features, labels, tuple(trace))
        logger.info("cut pursuit: %d points -> %d superpoints (rho=%.4g, energy %.6g -> %.6g)",
                    n, partition.n_superpoints, self.params.rho, trace[0], trace[-1])
        return partition


def l0_cut_pursuit(features: np.ndarray, graph: PointGraph, params: PartitionEnergyParams,
                   max_superpoints: Optional[int] = None) -> SuperpointPartition:
    """
    Greedy piecewise-constant partition of the point graph

    Args:
        features (np.ndarray): (n, d) point features
        graph (PointGraph): Point graph
        params (PartitionEnergyParams): Regularization strength
        max_superpoints (int, optional): Stop splitting once this many regions exist

    Returns:
        SuperpointPartition: Connected regions; ``energy_trace`` holds the
        energy after each accepted split
    """
    return CutPursuit(features, graph, params).run(max_superpoints)


def set_partitions(n: int) -> Iterator[np.ndarray]:
    """All set partitions of range(n) as restricted growth strings."""
    labels = [0] * n
    maxima = [0] * n

    def extend(pos: int) -> Iterator[np.ndarray]:
        if pos == n:
            yield np.array(labels, dtype=np.int64)
            return
        for value in range(maxima[pos - 1] + 2):
            labels[pos] = value
            maxima[pos] = max(maxima[pos - 1], value)
            yield from extend(pos + 1)

    if n == 0:
        return
    yield from extend(1)


def _refine_connected(labels: np.ndarray, edges: List[Tuple[int, int]]) -> np.ndarray:
    parent = list(range(len(labels)))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i, j in edges:
        if labels[i] == labels[j]:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(v) for v in range(len(labels))], dtype=np.int64)


def brute_force_partition(features: np.ndarray, graph: PointGraph,
                          params: PartitionEnergyParams) -> Tuple[SuperpointPartition, float]:
    """
    Exact minimizer by enumerating every set partition

    Each raw partition is refined into graph-connected parts before scoring.

    Returns:
        Tuple[SuperpointPartition, float]: Optimal partition and its energy
    """
    features = _check_shapes(features, graph)
    if graph.n > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"brute force is limited to {BRUTE_FORCE_LIMIT} vertices, got {graph.n}")
    edges = [(int(i), int(j)) for i, j in graph.edges]
    best: Optional[Tuple[float, SuperpointPartition]] = None
    seen = set()
    for raw in set_partitions(graph.n):
        refined = make_partition(features, _refine_connected(raw, edges))
        key = tuple(refined.assignment.tolist())
        if key in seen:
            continue
        seen.add(key)
        energy = partition_energy(features, graph, refined, params)
        if best is None or energy < best[0]:
            best = (energy, refined)
    return best[1], best[0]
