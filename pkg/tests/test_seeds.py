import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.cutpursuit import PartitionEnergyParams, l0_cut_pursuit, make_partition
from src.core.geomfeat import geometric_features, knn_graph
from src.core.synthdata import LabeledCloud, generate_scene, random_scene_config
from src.labeling.seeds import (DESCRIPTOR_DIM, SceneClassifier, SeedSet, SuperpointDescriptorSet,
                                class_activation_map, read_seeds, seed_count, select_seeds,
                                superpoint_descriptor, train_scene_classifier, write_seeds)
from src.utils.errors import EmptyCorpus, EmptySceneLabels, ParseError, ShapeMismatch


@pytest.fixture
def scene():
    cloud = generate_scene(random_scene_config(3, 200))
    graph = knn_graph(cloud.points, k=8)
    feats = geometric_features(cloud.points, graph)
    partition = l0_cut_pursuit(np.hstack([feats.values, cloud.colors]), graph, PartitionEnergyParams(0.03),
                               max_superpoints=20)
    return cloud, feats, partition


class TestDescriptor:
    def test_shape(self, scene):
        cloud, feats, partition = scene
        desc = superpoint_descriptor(cloud, feats, partition)
        assert desc.values.shape == (partition.n_superpoints, DESCRIPTOR_DIM)
        assert np.all(np.isfinite(desc.values))

    def test_single_point_superpoint_has_zero_spread(self, scene):
        cloud, feats, _ = scene
        labels = np.zeros(cloud.n_points, dtype=np.int64)
        labels[5] = 1
        partition = make_partition(feats.values, labels)
        desc = superpoint_descriptor(cloud, feats, partition)
        singleton = partition.assignment[5]
        assert_array_equal(desc.values[singleton, 4:8], 0.0)
        assert_array_equal(desc.values[singleton, 11:14], 0.0)

    def test_translation_invariance(self, scene):
        cloud, feats, partition = scene
        moved = LabeledCloud(cloud.points + np.array([10.0, 0.0, 0.0]), cloud.colors, cloud.gt_labels,
                             cloud.scene_labels)
        assert_allclose(superpoint_descriptor(moved, feats, partition).values,
                        superpoint_descriptor(cloud, feats, partition).values, atol=1e-9)

    def test_size_mismatch(self, scene):
        cloud, feats, partition = scene
        with pytest.raises(ShapeMismatch):
            superpoint_descriptor(cloud.subset(np.arange(10)), feats, partition)


class TestSceneClassifier:
    def test_initial_loss(self, rng):
        sets = [SuperpointDescriptorSet(rng.normal(size=(5, 4))) for _ in range(3)]
        clf = train_scene_classifier(sets, [{0}, {1, 2}, {0, 2}], n_categories=3, epochs=1)
        assert clf.training_log[0] == pytest.approx(3 * math.log(2), abs=1e-9)

    def test_linearly_separable_corpus(self, rng):
        # category c present iff pooled feature c is positive
        sets, labels = [], []
        for _ in range(12):
            signs = rng.choice([-1.0, 1.0], size=3)
            values = signs + rng.normal(scale=0.1, size=(6, 3))
            sets.append(SuperpointDescriptorSet(values))
            labels.append({c for c in range(3) if values.mean(axis=0)[c] > 0})
        clf = train_scene_classifier(sets, labels, n_categories=3, epochs=500, lr=0.05)
        for desc, present in zip(sets, labels):
            predicted = {c for c, p in enumerate(clf.predict_proba(desc)) if p > 0.5}
            assert predicted == present

    def test_constant_targets_saturate(self, rng):
        sets = [SuperpointDescriptorSet(rng.normal(size=(4, 3))) for _ in range(4)]
        clf = train_scene_classifier(sets, [{0, 1}] * 4, n_categories=2, epochs=500, lr=0.05)
        for desc in sets:
            assert np.all(clf.predict_proba(desc) >= 0.9)

    def test_loss_decreases(self, rng):
        sets = [SuperpointDescriptorSet(rng.normal(size=(5, 4))) for _ in range(6)]
        clf = train_scene_classifier(sets, [{0}, {1}, {0, 1}, {2}, {0, 2}, {1}], n_categories=3, epochs=200)
        assert clf.training_log[-1] < clf.training_log[0]

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            train_scene_classifier([], [], n_categories=3)


class TestClassActivationMap:
    def test_zero_weights(self, rng):
        clf = SceneClassifier(np.zeros((2, 4)), np.zeros(2))
        cam = class_activation_map(clf, SuperpointDescriptorSet(rng.normal(size=(5, 4))))
        assert_array_equal(cam, 0.0)

    def test_basis_weights_select_columns(self, rng):
        desc = SuperpointDescriptorSet(rng.normal(size=(5, 4)))
        weights = np.zeros((2, 4))
        weights[0, 2] = 1.0
        weights[1, 0] = 1.0
        cam = class_activation_map(SceneClassifier(weights, np.ones(2)), desc)
        assert_array_equal(cam[:, 0], desc.values[:, 2])
        assert_array_equal(cam[:, 1], desc.values[:, 0])

    def test_matches_entrywise_dot_products(self, rng):
        for _ in range(100):
            n, c, d = rng.integers(1, 8), rng.integers(1, 5), rng.integers(1, 6)
            desc = SuperpointDescriptorSet(rng.normal(size=(n, d)))
            clf = SceneClassifier(rng.normal(size=(c, d)), rng.normal(size=c))
            cam = class_activation_map(clf, desc)
            oracle = np.array([[sum(clf.weights[j, a] * desc.values[i, a] for a in range(d))
                                for j in range(c)] for i in range(n)])
            assert np.max(np.abs(cam - oracle)) <= 1e-12

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            class_activation_map(SceneClassifier(np.zeros((2, 3)), np.zeros(2)),
                                 SuperpointDescriptorSet(np.zeros((4, 5))))


class TestSelectSeeds:
    def test_forty_percent_of_ten(self, rng):
        seeds = select_seeds(rng.normal(size=(10, 3)), {0, 1, 2}, fraction=0.4)
        assert len(seeds) == 4

    @pytest.mark.parametrize("n", [1, 7, 13, 64, 101])
    def test_count_is_ceiling(self, rng, n):
        seeds = select_seeds(rng.normal(size=(n, 4)), {1, 3}, fraction=0.4)
        assert len(seeds) == math.ceil(0.4 * n)
        assert set(seeds.categories.tolist()) <= {1, 3}

    def test_masked_categories_never_seeded(self, rng):
        cam = rng.normal(size=(30, 4))
        cam[:, 2] += 100.0
        seeds = select_seeds(cam, {0, 1, 3}, fraction=1.0)
        assert 2 not in seeds.categories

    def test_full_fraction_uses_row_argmax(self, rng):
        cam = rng.normal(size=(8, 3))
        seeds = select_seeds(cam, {0, 1, 2}, fraction=1.0)
        assert sorted(seeds.superpoints.tolist()) == list(range(8))
        for sp, cat, score in seeds.entries:
            assert cat == int(np.argmax(cam[sp]))
            assert score == cam[sp, cat]

    def test_ranking_ties_go_to_lower_index(self):
        cam = np.array([[1.0, 0.0], [2.0, 0.0], [2.0, 0.0], [0.5, 0.0]])
        seeds = select_seeds(cam, {0, 1}, fraction=0.5)
        assert seeds.superpoints.tolist() == [1, 2]

    def test_empty_scene_labels(self, rng):
        with pytest.raises(EmptySceneLabels):
            select_seeds(rng.normal(size=(4, 2)), set())

    def test_seed_count_rounding(self):
        assert seed_count(0.4, 10) == 4
        assert seed_count(0.4, 11) == 5
        assert seed_count(1.0, 3) == 3


class TestSeedFile:
    def test_roundtrip(self, tmp_path):
        sets = [SeedSet(((3, 1, 0.25), (0, 2, -1.5)), scene_id=0), SeedSet(((7, 0, 1e-17),), scene_id=4)]
        path = tmp_path / "seeds.txt"
        write_seeds(sets, str(path))
        assert read_seeds(str(path)) == sets

    def test_bad_line(self, tmp_path):
        path = tmp_path / "seeds.txt"
        path.write_text("0 1 2 0.5\n0 x 2 0.5\n")
        with pytest.raises(ParseError) as err:
            read_seeds(str(path))
        assert err.value.line == 2
        assert err.value.token == "x"
