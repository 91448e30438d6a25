import json

import numpy as np
import pytest

from spherecorr import cli, config, encoder, metrics
from spherecorr.errors import NumericError


def _tiny_raw(out_dir):
    raw = config.ExperimentConfig().to_dict()
    raw["data"]["train_instances"] = 6
    raw["data"]["test_instances"] = 4
    raw["training"]["steps"] = 2
    raw["training"]["augment_copies"] = 1
    raw["bench"]["mc_samples"] = 100_000
    raw["bench"]["observations"] = 2
    raw["output"]["dir"] = str(out_dir)
    return raw


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "run"
    cfg_path = root / "tiny.toml"
    config.save(config.from_dict(_tiny_raw(out)), cfg_path)
    assert cli.main(["synth", "--config", str(cfg_path)]) == 0
    return {"root": root, "out": out, "cfg": str(cfg_path)}


def _manifest(ws):
    with open(ws["out"] / "dataset" / "manifest.json") as f:
        return json.load(f)


def test_synth_manifest_counts(ws):
    man = _manifest(ws)
    assert man["records"] == {"train": 6, "test": 4}
    assert sum(man["counts"]["train"].values()) == 6
    assert sum(man["counts"]["test"].values()) == 4
    # Remainder spreads over the leading categories.
    assert man["counts"]["train"] == {"bottle": 2, "mug": 2, "box": 2}
    assert man["counts"]["test"] == {"bottle": 2, "mug": 1, "box": 1}


def test_synth_rerun_is_identical(ws, tmp_path):
    first = _manifest(ws)["hash"]
    raw = _tiny_raw(tmp_path / "again")
    cfg_path = tmp_path / "cfg.toml"
    config.save(config.from_dict(raw), cfg_path)
    assert cli.main(["synth", "--config", str(cfg_path)]) == 0
    with open(tmp_path / "again" / "dataset" / "manifest.json") as f:
        assert json.load(f)["hash"] == first


def test_synth_seed_changes_dataset(ws, tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    config.save(config.from_dict(_tiny_raw(tmp_path / "seeded")), cfg_path)
    assert cli.main(["synth", "--config", str(cfg_path), "--seed", "5"]) == 0
    with open(tmp_path / "seeded" / "dataset" / "manifest.json") as f:
        assert json.load(f)["hash"] != _manifest(ws)["hash"]


def test_train_writes_checkpoint_and_history(ws):
    assert cli.main(["train", "--config", ws["cfg"]]) == 0
    params, meta = encoder.load_params(ws["out"] / "checkpoint.npz")
    assert meta["steps"] == 2
    with open(ws["out"] / "history.csv") as f:
        lines = f.read().splitlines()
    assert len(lines) == 3  # header + one row per step
    assert lines[0].split(",")[:4] == ["step", "lr", "loss", "nocs_angle_deg"]


def test_train_zero_steps_equals_init(ws, tmp_path):
    raw = _tiny_raw(ws["out"])  # reuse the synthesized dataset
    raw["training"]["steps"] = 0
    cfg_path = tmp_path / "zero.toml"
    config.save(config.from_dict(raw), cfg_path)
    assert cli.main(["train", "--config", str(cfg_path)]) == 0
    params, _ = encoder.load_params(ws["out"] / "checkpoint.npz")
    cfg = config.load(cfg_path)
    init = encoder.init_params(
        cfg.training.seed, cfg.build_grid().m_cells,
        cfg.model.width, cfg.model.hidden, cfg.model.layers,
    )
    assert set(params) == set(init)
    for k in params:
        assert np.array_equal(params[k], init[k])
    with open(ws["out"] / "history.csv") as f:
        assert len(f.read().splitlines()) == 1  # header only


def test_eval_oracle_mode_is_perfect(ws):
    assert cli.main(["eval", "--config", ws["cfg"], "--oracle-mode"]) == 0
    table, metadata = metrics.read_report(ws["out"] / "eval.json")
    assert metadata["oracle_mode"] is True
    for row in table.rows.values():
        for col in metrics.PERCENT_COLUMNS:
            if col.startswith("acc"):
                assert row[col] == 100.0
    mean = table.mean_row()
    assert mean["nocs_angle_deg"] < 1e-6 and mean["nocs_distance"] < 1e-9


def test_eval_oracle_mode_deterministic(ws):
    assert cli.main(["eval", "--config", ws["cfg"], "--oracle-mode"]) == 0
    first = (ws["out"] / "eval.json").read_bytes()
    assert cli.main(["eval", "--config", ws["cfg"], "--oracle-mode"]) == 0
    assert (ws["out"] / "eval.json").read_bytes() == first


def test_eval_with_checkpoint_and_threads(ws, tmp_path):
    assert cli.main(["train", "--config", ws["cfg"]]) == 0
    assert cli.main(["eval", "--config", ws["cfg"]]) == 0
    single = (ws["out"] / "eval.json").read_bytes()
    table, metadata = metrics.read_report(ws["out"] / "eval.json")
    assert metadata["oracle_mode"] is False
    assert sorted(table.rows) == ["bottle", "box", "mug"]
    assert cli.main(["eval", "--config", ws["cfg"], "--threads", "3"]) == 0
    assert (ws["out"] / "eval.json").read_bytes() == single


def test_grid_bench_report(ws):
    assert cli.main(["grid-bench", "--config", ws["cfg"]]) == 0
    with open(ws["out"] / "grid_bench.json") as f:
        rows = {r["kind"]: r for r in json.load(f)["rows"]}
    assert set(rows) == {"healpix", "equirect", "fibonacci"}
    assert rows["equirect"]["solid_angle_ratio"] > 10.0
    assert rows["equirect"]["solid_angle_ratio"] > 3 * rows["healpix"]["solid_angle_ratio"]
    for r in rows.values():
        assert 0.1 < r["coverage_mean"] < 0.9


def test_loss_bench_table(ws):
    assert cli.main(["loss-bench", "--config", ws["cfg"]]) == 0
    with open(ws["out"] / "loss_bench.csv") as f:
        lines = [l for l in f.read().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    assert len(lines) == 1002  # header + 1001 error values
    rows = [dict(zip(header, l.split(","))) for l in lines[1:]]
    assert float(rows[0]["e"]) == 0.0
    for kind in ("l1", "l2", "hyp_l1", "hyp_l2", "smooth_l1"):
        assert float(rows[0][kind]) == 0.0
        assert float(rows[0][f"{kind}_grad"]) == 0.0
    # Hyperbolic L2 out-pulls plain L2 exactly below e = sqrt(2) - 1.
    for row in rows:
        e = float(row["e"])
        stronger = float(row["hyp_l2_grad"]) > float(row["l2_grad"])
        if e != 0.0 and abs(e - (np.sqrt(2.0) - 1.0)) > 1e-3:
            assert stronger == (e < np.sqrt(2.0) - 1.0), e


def test_grid_override_changes_model_shape(ws, tmp_path):
    raw = _tiny_raw(ws["out"])
    cfg_path = tmp_path / "cfg.toml"
    config.save(config.from_dict(raw), cfg_path)
    out2 = tmp_path / "coarse"
    assert cli.main([
        "train", "--config", str(cfg_path), "--grid", "healpix:2", "--out", str(out2),
    ]) == 3  # new out dir has no dataset
    assert cli.main(["synth", "--config", str(cfg_path), "--grid", "healpix:2",
                     "--out", str(out2)]) == 0
    assert cli.main(["train", "--config", str(cfg_path), "--grid", "healpix:2",
                     "--out", str(out2)]) == 0
    params, _ = encoder.load_params(out2 / "checkpoint.npz")
    assert params["epos"].shape[0] == 48


def test_bad_config_exits_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("version = 1\n[grid]\nkind = \"cube\"\n")
    assert cli.main(["synth", "--config", str(bad)]) == 2
    assert cli.main(["synth", "--config", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["loss-bench", "--config", "desk", "--grid", "healpix:x"]) == 2


def test_missing_data_exits_3(tmp_path):
    raw = _tiny_raw(tmp_path / "empty")
    cfg_path = tmp_path / "cfg.toml"
    config.save(config.from_dict(raw), cfg_path)
    assert cli.main(["train", "--config", str(cfg_path)]) == 3
    assert cli.main(["eval", "--config", str(cfg_path)]) == 3


def test_numeric_failure_exits_4_with_last_good_checkpoint(ws, tmp_path, monkeypatch):
    def explode(observations, grid, cfg, **kw):
        exc = NumericError("non-finite loss at optimizer step 2")
        exc.last_params = encoder.init_params(0, grid.m_cells, 2, 4, 1)
        exc.history = [{"step": 0, "lr": 1.0, "loss": 1.0, "nocs_angle_deg": 90.0}]
        exc.aborted_at = 1
        raise exc

    monkeypatch.setattr(cli.training, "train", explode)
    out2 = tmp_path / "abort"
    raw = _tiny_raw(ws["out"])
    raw["output"]["dir"] = str(out2)
    cfg_path = tmp_path / "cfg.toml"
    config.save(config.from_dict(raw), cfg_path)
    (out2 / "dataset").mkdir(parents=True)
    for name in ("train.jsonl", "test.jsonl"):
        (out2 / "dataset" / name).write_bytes((ws["out"] / "dataset" / name).read_bytes())
    assert cli.main(["train", "--config", str(cfg_path)]) == 4
    params, meta = encoder.load_params(out2 / "checkpoint_lastgood.npz")
    assert meta["aborted_at"] == 1
    assert params["epos"].shape == (192, 2)


def test_preset_name_resolves(tmp_path):
    assert cli.main(["loss-bench", "--config", "desk", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "loss_bench.csv").exists()
