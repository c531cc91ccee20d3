import numpy as np
import pytest
from numpy.testing import assert_array_equal
from scipy.sparse.csgraph import connected_components

from src.core.cutpursuit import (PartitionEnergyParams, brute_force_partition, l0_cut_pursuit,
                                 make_partition, partition_energy, set_partitions)
from src.core.geomfeat import PointGraph, knn_graph
from src.utils.errors import InvalidConfig, ShapeMismatch, TooLarge


def path_graph(n):
    return PointGraph(n=n, edges=np.array([[i, i + 1] for i in range(n - 1)], dtype=np.int64), k=1)


@pytest.fixture
def two_clusters(rng):
    """Two complete 4-cliques (features near 0 and near 1) joined by the edge (3, 4)."""
    features = np.concatenate([rng.normal(0.0, 0.01, 4), rng.normal(1.0, 0.01, 4)])[:, None]
    edges = [(i, j) for block in (range(4), range(4, 8)) for i in block for j in block if i < j]
    edges.append((3, 4))
    graph = PointGraph(n=8, edges=np.array(sorted(edges), dtype=np.int64), k=3)
    return features, graph


def random_instance(rng, n):
    points = rng.uniform(0, 1, size=(n, 3))
    features = rng.uniform(0, 1, size=(n, 2))
    return features, knn_graph(points, k=2)


class TestPartitionEnergy:
    def test_singletons(self, rng):
        features, graph = random_instance(rng, 7)
        partition = make_partition(features, np.arange(7))
        energy = partition_energy(features, graph, partition, PartitionEnergyParams(0.2))
        assert energy == pytest.approx(0.2 * graph.n_edges)

    def test_single_region(self, rng):
        features, graph = random_instance(rng, 7)
        partition = make_partition(features, np.zeros(7, dtype=np.int64))
        expected = np.sum((features - features.mean(axis=0)) ** 2)
        assert partition_energy(features, graph, partition, PartitionEnergyParams(5.0)) == pytest.approx(expected)

    def test_path_example(self):
        features = np.array([[0.0], [0.0], [1.0], [1.0]])
        partition = make_partition(features, np.array([0, 0, 1, 1]))
        energy = partition_energy(features, path_graph(4), partition, PartitionEnergyParams(0.1))
        assert energy == pytest.approx(0.1)

    def test_shape_mismatch(self):
        features = np.zeros((4, 1))
        with pytest.raises(ShapeMismatch):
            partition_energy(features, path_graph(5), make_partition(features, np.arange(4)),
                             PartitionEnergyParams(0.1))

    def test_negative_rho(self):
        with pytest.raises(InvalidConfig):
            PartitionEnergyParams(-1.0)


def test_make_partition_numbers_regions_by_first_point():
    features = np.arange(5, dtype=np.float64)[:, None]
    partition = make_partition(features, np.array([7, 3, 7, 9, 3]))
    assert_array_equal(partition.assignment, [0, 1, 0, 2, 1])
    assert partition.n_superpoints == 3
    assert_array_equal(partition.sizes(), [2, 2, 1])
    assert_array_equal(partition.region_means[:, 0], [1.0, 2.5, 3.0])


class TestCutPursuit:
    def test_two_clusters(self, two_clusters):
        features, graph = two_clusters
        params = PartitionEnergyParams(0.05)
        partition = l0_cut_pursuit(features, graph, params)
        assert partition.n_superpoints == 2
        assert_array_equal(partition.assignment, [0, 0, 0, 0, 1, 1, 1, 1])
        oracle, oracle_energy = brute_force_partition(features, graph, params)
        assert_array_equal(oracle.assignment, partition.assignment)
        assert partition_energy(features, graph, partition, params) == pytest.approx(oracle_energy)

    def test_dominant_penalty_keeps_one_region(self, rng):
        features, graph = random_instance(rng, 30)
        span = np.ptp(features)
        partition = l0_cut_pursuit(features, graph, PartitionEnergyParams(10 * span ** 2 * 30))
        assert partition.n_superpoints == 1

    def test_zero_penalty_gives_singletons(self, rng):
        features, graph = random_instance(rng, 12)
        params = PartitionEnergyParams(0.0)
        partition = l0_cut_pursuit(features, graph, params)
        assert partition.n_superpoints == 12
        assert partition_energy(features, graph, partition, params) == pytest.approx(0.0, abs=1e-12)

    def test_regions_are_connected(self, rng):
        points = rng.uniform(0, 1, size=(120, 3))
        graph = knn_graph(points, k=5)
        features = np.column_stack([points[:, 0] > 0.5, points[:, 1]]).astype(np.float64)
        partition = l0_cut_pursuit(features, graph, PartitionEnergyParams(0.05))
        adjacency = graph.adjacency().tocsr()
        for members in partition.members():
            n_comp, _ = connected_components(adjacency[members][:, members], directed=False)
            assert n_comp == 1

    def test_superpoint_target(self, rng):
        points = rng.uniform(0, 1, size=(150, 3))
        graph = knn_graph(points, k=6)
        features = rng.uniform(0, 1, size=(150, 3))
        unlimited = l0_cut_pursuit(features, graph, PartitionEnergyParams(0.01))
        capped = l0_cut_pursuit(features, graph, PartitionEnergyParams(0.01), max_superpoints=10)
        assert capped.n_superpoints >= 10
        assert capped.n_superpoints < unlimited.n_superpoints

    def test_disconnected_graph_starts_from_components(self):
        features = np.zeros((4, 1))
        graph = PointGraph(n=4, edges=np.array([[0, 1], [2, 3]], dtype=np.int64), k=1)
        partition = l0_cut_pursuit(features, graph, PartitionEnergyParams(0.1))
        assert_array_equal(partition.assignment, [0, 0, 1, 1])


class TestBruteForce:
    def test_bell_number(self):
        assert len(list(set_partitions(4))) == 15
        assert len(list(set_partitions(5))) == 52

    @pytest.mark.parametrize("rho, n_regions", [(0.4, 2), (0.6, 1)])
    def test_two_node_threshold(self, rho, n_regions):
        features = np.array([[0.0], [1.0]])
        graph = path_graph(2)
        params = PartitionEnergyParams(rho)
        partition, energy = brute_force_partition(features, graph, params)
        assert partition.n_superpoints == n_regions
        assert energy == pytest.approx(min(rho, 0.5))
        assert l0_cut_pursuit(features, graph, params).n_superpoints == n_regions

    def test_too_large(self):
        with pytest.raises(TooLarge):
            brute_force_partition(np.zeros((10, 1)), path_graph(10), PartitionEnergyParams(0.1))

    def test_oracle_lower_bounds_greedy(self, rng):
        params = PartitionEnergyParams(0.1)
        for _ in range(25):
            features, graph = random_instance(rng, 6)
            _, optimum = brute_force_partition(features, graph, params)
            greedy = l0_cut_pursuit(features, graph, params)
            assert optimum <= partition_energy(features, graph, greedy, params) + 1e-12


def test_greedy_quality_against_oracle():
    rng = np.random.default_rng(2024)
    params = PartitionEnergyParams(0.1)
    near_optimal = 0
    for _ in range(25):
        features, graph = random_instance(rng, 8)
        _, optimum = brute_force_partition(features, graph, params)
        greedy = l0_cut_pursuit(features, graph, params)
        energy = partition_energy(features, graph, greedy, params)
        single = partition_energy(features, graph, make_partition(features, np.zeros(8, dtype=np.int64)), params)
        trace = np.array(greedy.energy_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        assert energy <= single + 1e-12
        near_optimal += energy <= 1.10 * optimum + 1e-12
    assert near_optimal >= 23
