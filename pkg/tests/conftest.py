"""
Shared fixtures
"""

import numpy as np
import pytest

from src.labeling.hypergraph import Hypergraph
from src.pipeline.config import PipelineConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    """Two small scenes and short training; runs in seconds."""
    return PipelineConfig(n_scenes=2, points_per_scene=160, superpoint_target=16, epochs=40,
                          classifier_epochs=60, hidden_dim=8, subsample_points=64)


@pytest.fixture
def make_hypergraph():
    def factory(incidence, weights=None, labeled=()):
        incidence = np.asarray(incidence, dtype=np.float64)
        n_edges = incidence.shape[1]
        weights = np.ones(n_edges) if weights is None else np.asarray(weights, dtype=np.float64)
        kinds = tuple(f"knn:{e}" for e in range(n_edges))
        return Hypergraph(incidence.shape[0], incidence, weights, kinds, tuple(labeled))
    return factory


@pytest.fixture
def random_hypergraph(make_hypergraph):
    """Random hypergraph with every hyperedge holding at least two vertices."""
    def factory(rng, n_vertices, n_edges, max_size=None, random_weights=True):
        max_size = max_size or n_vertices
        incidence = np.zeros((n_vertices, n_edges))
        for e in range(n_edges):
            size = int(rng.integers(2, max_size + 1))
            incidence[rng.choice(n_vertices, size=size, replace=False), e] = 1.0
        weights = rng.uniform(0.1, 2.0, size=n_edges) if random_weights else None
        return make_hypergraph(incidence, weights)
    return factory
