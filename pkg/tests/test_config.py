import dataclasses

import pytest

from spherecorr import config
from spherecorr.errors import ConfigError


def test_default_roundtrip_identity():
    cfg = config.ExperimentConfig()
    again = config.loads(config.dumps(cfg))
    assert again == cfg


def test_preset_roundtrip_identity():
    for name in ("desk", "paper"):
        cfg = config.load_preset(name)
        assert config.loads(config.dumps(cfg)) == cfg


def test_hash_is_stable_and_order_free():
    cfg = config.ExperimentConfig()
    h = cfg.config_hash()
    assert len(h) == 16 and int(h, 16) >= 0
    assert config.loads(config.dumps(cfg)).config_hash() == h


def test_hash_changes_with_content():
    cfg = config.ExperimentConfig()
    raw = cfg.to_dict()
    raw["training"]["seed"] = 7
    assert config.from_dict(raw).config_hash() != cfg.config_hash()


def test_unknown_section_rejected():
    raw = config.ExperimentConfig().to_dict()
    raw["extras"] = {"x": 1}
    with pytest.raises(ConfigError):
        config.from_dict(raw)


def test_unknown_key_rejected():
    raw = config.ExperimentConfig().to_dict()
    raw["training"]["momentum"] = 0.9
    with pytest.raises(ConfigError):
        config.from_dict(raw)


def test_wrong_version_rejected():
    raw = config.ExperimentConfig().to_dict()
    raw["version"] = 2
    with pytest.raises(ConfigError):
        config.from_dict(raw)


def test_enum_fields_validated():
    for section, key, bad in [
        ("grid", "kind", "cube"),
        ("training", "loss_kind", "l3"),
        ("training", "schedule", "step"),
        ("data", "categories", ["bottle", "plate"]),
    ]:
        raw = config.ExperimentConfig().to_dict()
        raw[section][key] = bad
        with pytest.raises(ConfigError):
            config.from_dict(raw)


def test_range_checks():
    for section, key, bad in [
        ("grid", "resolution", 0),
        ("training", "steps", -1),
        ("training", "lr", 0.0),
        ("data", "train_instances", 0),
        ("ransac", "sample_size", 2),
        ("ransac", "refine", -0.1),
        ("bench", "mc_samples", 1000),
    ]:
        raw = config.ExperimentConfig().to_dict()
        raw[section][key] = bad
        with pytest.raises(ConfigError):
            config.from_dict(raw)


def test_malformed_toml_raises_config_error():
    with pytest.raises(ConfigError):
        config.loads("version = [unclosed")


def test_file_roundtrip(tmp_path):
    cfg = config.load_preset("desk")
    path = tmp_path / "cfg.toml"
    config.save(cfg, path)
    assert config.load(path) == cfg


def test_missing_file_raises_config_error(tmp_path):
    with pytest.raises(ConfigError):
        config.load(tmp_path / "absent.toml")


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError):
        config.load_preset("workstation")


def test_bridges_produce_consistent_objects():
    cfg = config.load_preset("desk")
    grid = cfg.build_grid()
    assert grid.kind == cfg.grid.kind
    tc = cfg.train_config()
    assert tc.steps == cfg.training.steps
    assert tc.loss_kind == cfg.training.loss_kind
    assert tc.width == cfg.model.width
    rc = cfg.ransac_config()
    assert rc.iterations == cfg.ransac.iterations
    assert rc.refine_threshold == cfg.ransac.refine  # desk enables the refit
    default_rc = config.ExperimentConfig().ransac_config()
    assert default_rc.refine_threshold is None  # refine 0 bridges to disabled
    fc = cfg.feature_config()
    assert fc.c == cfg.model.width and fc.k == cfg.model.feature_k


def test_configs_are_frozen():
    cfg = config.ExperimentConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.training = None
