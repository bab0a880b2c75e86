import csv
import json

import pytest
import yaml
from click.testing import CliRunner

from leoqoe.cli import main
from leoqoe.config import ScenarioConfig, dump_config, load_config
from leoqoe.experiment import compare_variants, run_scenario
from leoqoe.results import rolling_mean

TINY = {
    "seed": 5,
    "constellation": {"subgrid_rows": 3, "subgrid_cols": 3, "duration_s": 30, "snapshot_interval_s": 15},
    "traffic": {"flow_count": 6},
    "allocator": {"episodes": 15, "a_0": 5},
    "simulator": {"window_slots": 150, "iterations": 2},
}


@pytest.fixture
def tiny_cfg(tmp_path):
    cfg = ScenarioConfig().with_overrides(**TINY)
    path = tmp_path / "tiny.yaml"
    dump_config(cfg, path)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_roundtrip(tiny_cfg):
    cfg = load_config(tiny_cfg)
    assert cfg.traffic.flow_count == 6
    assert load_config(tiny_cfg).config_hash() == cfg.config_hash()
    assert cfg.with_overrides(seed=6).config_hash() != cfg.config_hash()


@pytest.mark.parametrize(
    "patch",
    [
        {"bogus": 1},
        {"traffic": {"mix": {"VC": 0.5}}},
        {"constellation": {"altitude_km": -1}},
        {"scheduler": {"omega_max": 1, "omega_min": 2}},
        {"allocator": {"k_routes": 0}},
        {"constellation": {"subgrid_rows": 80}},
    ],
)
def test_invalid_configs_exit_nonzero(tmp_path, patch):
    data = ScenarioConfig().model_dump(mode="json", by_alias=True)
    for k, v in patch.items():
        if isinstance(v, dict):
            data[k] = {**data[k], **v}
        else:
            data[k] = v
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(data))
    res = CliRunner().invoke(main, ["validate-config", "--config", str(p)])
    assert res.exit_code != 0
    assert "invalid config" in res.output


def test_missing_config_file(tmp_path):
    res = CliRunner().invoke(main, ["train", "--config", str(tmp_path / "nope.yaml")])
    assert res.exit_code != 0


def test_validate_ok(tiny_cfg):
    res = CliRunner().invoke(main, ["validate-config", "--config", str(tiny_cfg)])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("ok ")


def test_train_trace(tiny_cfg, tmp_path):
    out = tmp_path / "t"
    res = CliRunner().invoke(main, ["train", "--config", str(tiny_cfg), "--out", str(out)])
    assert res.exit_code == 0, res.output
    rows = _rows(out / "training_trace.csv")
    assert len(rows) == 15
    best = [float(r["running_max_reward"]) for r in rows]
    assert best == sorted(best)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["config_hash"] == load_config(tiny_cfg).config_hash()

    one = tmp_path / "one"
    res = CliRunner().invoke(main, ["train", "--config", str(tiny_cfg), "--out", str(one), "--episodes", "1"])
    assert res.exit_code == 0
    assert len(_rows(one / "training_trace.csv")) == 1


def test_compare_single_policy(tiny_cfg, tmp_path):
    out = tmp_path / "c"
    res = CliRunner().invoke(
        main, ["compare", "--config", str(tiny_cfg), "--out", str(out), "--policies", "dsroq", "--iterations", "1"]
    )
    assert res.exit_code == 0, res.output
    rows = _rows(out / "qos_scores.csv")
    assert {r["policy"] for r in rows} == {"dsroq"}
    assert all(r["iteration"] == "0" for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert [g["policy"] for g in summary["groups"]] == ["dsroq"]


def test_compare_unknown_policy(tiny_cfg):
    res = CliRunner().invoke(main, ["compare", "--config", str(tiny_cfg), "--policies", "magic"])
    assert res.exit_code != 0


def test_compare_is_byte_identical(tiny_cfg, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        res = CliRunner().invoke(main, ["compare", "--config", str(tiny_cfg), "--out", str(out)])
        assert res.exit_code == 0, res.output
        outs.append(out)
    for f in ("qos_scores.csv", "fairness.csv", "summary.json", "training_trace.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    m = [json.loads((o / "manifest.json").read_text()) for o in outs]
    assert m[0]["output_hash"] == m[1]["output_hash"]


def test_sweep_weights(tiny_cfg, tmp_path):
    out = tmp_path / "s"
    res = CliRunner().invoke(
        main, ["sweep-weights", "--config", str(tiny_cfg), "--out", str(out), "--ef-weights", "5,10,20", "--iterations", "1"]
    )
    assert res.exit_code == 0, res.output
    rows = _rows(out / "qos_scores.csv")
    assert {float(r["ef_weight"]) for r in rows if r["traffic_class"] == "EF"} == {5.0, 10.0, 20.0}


def test_identical_generation_across_policies(tiny_cfg):
    cfg = load_config(tiny_cfg)
    res = run_scenario(cfg, compare_variants(cfg, ["dsroq", "dsroq_fifo", "baseline"]), iterations=1)
    by_policy = {}
    for r in res.scores:
        by_policy.setdefault(r.policy, {})[(r.snapshot, r.flow_id)] = r.generated
    # MCTS variants share allocation and arrival streams
    assert by_policy["dsroq"] == by_policy["dsroq_fifo"]


def test_scenario_shape_and_migrations(tiny_cfg):
    cfg = load_config(tiny_cfg).with_overrides(constellation={"duration_s": 60})
    res = run_scenario(cfg, compare_variants(cfg, ["dsroq"]), iterations=1, audit=True)
    assert len({k for k in res.traces}) == 4
    assert res.migrations == 3
    assert len(res.fairness) == 4


def test_resampling_disabled_keeps_flows():
    cfg = ScenarioConfig().with_overrides(**TINY).with_overrides(traffic={"resample_flows": False})
    res = run_scenario(cfg, compare_variants(cfg, ["dsroq"]), iterations=2)
    flows = {it: sorted((r.flow_id, r.app) for r in res.scores if r.iteration == it and r.snapshot == 0) for it in (0, 1)}
    gens = {it: [r.generated for r in res.scores if r.iteration == it] for it in (0, 1)}
    assert flows[0] == flows[1]
    assert gens[0] != gens[1]
    assert len(res.traces) == 2  # trained once per snapshot, reused across iterations


def test_rolling_mean():
    assert rolling_mean([1, 2, 3, 4], 2) == [1, 1.5, 2.5, 3.5]
