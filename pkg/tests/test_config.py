import pytest

from src.pipeline.config import (PipelineConfig, format_config, load_config, parse_overrides,
                                 read_config_file)
from src.utils.errors import InvalidConfig


def test_defaults():
    config = PipelineConfig()
    assert config.seed_fraction == 0.4
    assert config.k_h == 5
    assert config.hidden_dim == 32
    assert config.epochs == 500
    assert config.lr == 0.003
    assert config.dropout == 0.5
    assert config.classifier_epochs == 500
    assert config.classifier_lr == 0.003
    assert config.superpoint_target is None
    assert config.use_whcn and config.use_attention and config.use_superpoints


def test_file_values(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# small run\nN_SCENES=3\nRHO=0.05\nUSE_ATTENTION=off\nKNN_BACKEND=kdtree\n")
    config = load_config(str(path))
    assert config.n_scenes == 3
    assert config.rho == 0.05
    assert config.use_attention is False
    assert config.knn_backend == "kdtree"


def test_precedence(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("EPOCHS=10\nRNG_SEED=4\n")
    config = load_config(str(path), overrides={"epochs": "20"}, seed=9)
    assert config.epochs == 20
    assert config.rng_seed == 9


def test_environment_default(tmp_path, monkeypatch):
    path = tmp_path / "env.env"
    path.write_text("K_H=7\n")
    monkeypatch.setenv("WHCN_CONFIG", str(path))
    assert load_config().k_h == 7


def test_unknown_key(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("EPOCS=10\n")
    with pytest.raises(InvalidConfig, match="EPOCS"):
        read_config_file(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(InvalidConfig):
        load_config(str(tmp_path / "nope.env"))


@pytest.mark.parametrize("override", [
    {"seed_fraction": "0"},
    {"seed_fraction": "1.5"},
    {"dropout": "1"},
    {"mu": "0"},
    {"knn_k": "0"},
    {"knn_backend": "octree"},
    {"hidden_dim": "2048"},
    {"propagation_alpha": "1"},
    {"epochs": "ten"},
    {"use_whcn": "maybe"},
])
def test_rejected_values(override):
    with pytest.raises(InvalidConfig):
        load_config(overrides=override)


@pytest.mark.parametrize("text, expected", [("true", True), ("1", True), ("Yes", True), ("ON", True),
                                            ("false", False), ("0", False), ("no", False), ("off", False)])
def test_bool_words(text, expected):
    assert load_config(overrides={"use_superpoints": text}).use_superpoints is expected


def test_superpoint_target_follows_cloud_size():
    config = PipelineConfig()
    assert config.superpoint_target_for(600) == 37
    assert config.superpoint_target_for(160) == 10
    assert config.superpoint_target_for(5000) == 64
    assert PipelineConfig(superpoint_target=16).superpoint_target_for(600) == 16


@pytest.mark.parametrize("text", ["auto", "AUTO", ""])
def test_superpoint_target_auto(text):
    assert load_config(overrides={"superpoint_target": "12"}).superpoint_target == 12
    assert load_config(overrides={"superpoint_target": text}).superpoint_target is None


def test_superpoint_target_rejected():
    with pytest.raises(InvalidConfig):
        load_config(overrides={"superpoint_target": "1"})
    with pytest.raises(InvalidConfig):
        load_config(overrides={"superpoint_target": "many"})


def test_parse_overrides():
    assert parse_overrides(["epochs=5", "rho=0.1"]) == {"epochs": "5", "rho": "0.1"}
    assert parse_overrides(None) == {}
    with pytest.raises(InvalidConfig):
        parse_overrides(["epochs"])


def test_format_roundtrip(tmp_path):
    for config in (PipelineConfig(n_scenes=3, rho=0.1 + 0.2, use_attention=False),
                   PipelineConfig(superpoint_target=20)):
        path = tmp_path / "out.env"
        path.write_text(format_config(config))
        assert load_config(str(path)) == config
