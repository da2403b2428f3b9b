import csv
import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

import nctrl.harness as harness
from nctrl.agents import load_agent
from nctrl.cli import build_config, main, parse_config_file
from nctrl.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    run_experiment,
    sweep,
    value_phase_grid,
)


def tiny_config(out, **kw):
    base = dict(env="pendulum", agent="dau", dt=0.01, parallel_envs=4,
                nb_epochs=2, nb_steps=5, nb_learn=3, batch=16, hidden=(16, 16),
                eval_interval=0.2, eval_episodes=3, out_dir=out)
    base.update(kw)
    return ExperimentConfig(**base)


def read_rows(path):
    with open(path, encoding="utf-8") as f:
        rdr = csv.reader(f)
        header = next(rdr)
        return header, list(rdr)


# ------------------------------------------------------------------ smoke/schema


def test_smoke_run_writes_declared_schema(tmp_path):
    out = str(tmp_path / "run")
    res = run_experiment(tiny_config(out))
    assert res["early_stop"] is None
    header, rows = read_rows(os.path.join(out, "metrics.csv"))
    assert tuple(header) == CSV_COLUMNS
    assert len(rows) == res["rows"] == 3  # t=0 plus one per 0.2s of 0.4s total
    times = [float(r[0]) for r in rows]
    assert times == sorted(times) == [0.0, 0.2, 0.4]
    # training stats empty before any learning, filled afterwards
    assert rows[0][5] == ""
    assert rows[1][5] != ""
    for name in ("metrics.csv", "timing.csv", "config.json", "meta.json",
                 "checkpoint.bin"):
        assert os.path.exists(os.path.join(out, name))


def test_identical_config_and_seed_is_byte_identical(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    run_experiment(tiny_config(a, seed=7))
    run_experiment(tiny_config(b, seed=7))
    with open(os.path.join(a, "metrics.csv"), "rb") as f:
        bytes_a = f.read()
    with open(os.path.join(b, "metrics.csv"), "rb") as f:
        bytes_b = f.read()
    assert bytes_a == bytes_b


def test_different_seed_changes_metrics(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    run_experiment(tiny_config(a, seed=1))
    run_experiment(tiny_config(b, seed=2))
    with open(os.path.join(a, "metrics.csv"), "rb") as f:
        bytes_a = f.read()
    with open(os.path.join(b, "metrics.csv"), "rb") as f:
        bytes_b = f.read()
    assert bytes_a != bytes_b


# --------------------------------------------------------------- bookkeeping


def test_physical_time_accounting(tmp_path):
    cfg = tiny_config(str(tmp_path / "x"))
    assert cfg.physical_time_total() == pytest.approx(2 * 5 * 4 * 0.01)
    run_experiment(cfg)
    with open(os.path.join(cfg.out_dir, "meta.json"), encoding="utf-8") as f:
        meta = json.load(f)
    assert meta["physical_time_total"] == pytest.approx(0.4)
    assert meta["transitions"] == 2 * 5 * 4
    assert meta["updates"] == 2 * 3

    cfg2 = tiny_config(str(tmp_path / "y"), parallel_envs=8)
    assert cfg2.physical_time_total() == pytest.approx(2 * cfg.physical_time_total())


def test_eval_rows_share_grid_times_across_dt(tmp_path):
    # same eval_interval, epochs chosen so both spans cover 0.4s
    r1 = tiny_config(str(tmp_path / "d1"), dt=0.01, nb_epochs=2)
    r2 = tiny_config(str(tmp_path / "d2"), dt=0.005, nb_epochs=4)
    run_experiment(r1)
    run_experiment(r2)
    _, rows1 = read_rows(os.path.join(r1.out_dir, "metrics.csv"))
    _, rows2 = read_rows(os.path.join(r2.out_dir, "metrics.csv"))
    assert [r[0] for r in rows1] == [r[0] for r in rows2]  # identical strings


def test_evaluation_never_touches_training(tmp_path):
    """Runs differing only in eval cadence must train bit-identically."""
    sparse = tiny_config(str(tmp_path / "sparse"), eval_interval=10.0)
    dense = tiny_config(str(tmp_path / "dense"), eval_interval=0.05)
    run_experiment(sparse)
    run_experiment(dense)
    a1, _ = load_agent(os.path.join(sparse.out_dir, "checkpoint.bin"))
    a2, _ = load_agent(os.path.join(dense.out_dir, "checkpoint.bin"))
    for name, net in a1.nets().items():
        assert np.array_equal(net.params, a2.nets()[name].params)


def test_unscaled_mode_stores_reference_scale_rewards(tmp_path):
    # lqr reward rate is -s^2; stored rewards must use the reference step 0.01
    cfg = tiny_config(str(tmp_path / "u"), env="lqr", dt=0.02, mode="unscaled",
                      eval_interval=1.0)
    res = run_experiment(cfg, keep_state=True)
    buf = res["_state"]["buffer"]
    s, a, r, d, s2 = buf.sample(200)
    np.testing.assert_allclose(r, -(s[:, 0] ** 2) * 0.01, rtol=1e-12)

    cfg2 = tiny_config(str(tmp_path / "s"), env="lqr", dt=0.02, mode="scaled",
                       eval_interval=1.0)
    res2 = run_experiment(cfg2, keep_state=True)
    s, a, r, d, s2 = res2["_state"]["buffer"].sample(200)
    np.testing.assert_allclose(r, -(s[:, 0] ** 2) * 0.02, rtol=1e-12)


def test_cartpole_terminals_are_pushed_and_reset(tmp_path):
    cfg = tiny_config(str(tmp_path / "c"), env="cartpole", agent="dqn",
                      nb_steps=30, eval_interval=2.4)
    res = run_experiment(cfg, keep_state=True)
    assert res["early_stop"] is None
    s, a, r, d, s2 = res["_state"]["buffer"].sample(2000)
    assert np.any(d == 1.0) and np.any(d == 0.0)
    assert a.dtype == np.int64


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(agent="sarsa").validate()
    with pytest.raises(ValueError):
        ExperimentConfig(mode="half").validate()
    with pytest.raises(ValueError):
        ExperimentConfig(dt=0.0).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(gamma=1.0).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(eval_interval=0.0).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(nb_epochs=0).validate()


def test_early_stop_on_nonfinite_signal(tmp_path, monkeypatch):
    real_make = harness.make_agent

    def poisoned(*args, **kwargs):
        agent = real_make(*args, **kwargs)
        orig = agent.update

        def bad_update(batch):
            stats = orig(batch)
            stats["residual_mean"] = float("nan")
            return stats

        agent.update = bad_update
        return agent

    monkeypatch.setattr(harness, "make_agent", poisoned)
    cfg = tiny_config(str(tmp_path / "bad"))
    res = run_experiment(cfg)
    assert res["early_stop"] and "non-finite" in res["early_stop"]
    with open(os.path.join(cfg.out_dir, "meta.json"), encoding="utf-8") as f:
        assert json.load(f)["early_stop"]
    _, rows = read_rows(os.path.join(cfg.out_dir, "metrics.csv"))
    assert rows[-1][5] == "nan"  # diagnostic row carries the bad signal


# ----------------------------------------------------------------------- sweep


def test_single_cell_sweep_equals_the_run(tmp_path):
    base = tiny_config("unused")
    out = str(tmp_path / "sw")
    summary = sweep(base, [0.01], [0], out)
    assert len(summary["cells"]) == 1 and not summary["failures"]
    _, sweep_rows = read_rows(os.path.join(out, "sweep.csv"))
    _, run_rows = read_rows(os.path.join(out, "dt0.01_seed0", "metrics.csv"))
    assert sweep_rows == run_rows


def test_sweep_records_partial_failures_and_continues(tmp_path):
    base = tiny_config("unused")
    out = str(tmp_path / "sw2")
    summary = sweep(base, [-1.0, 0.01], [0], out)
    assert len(summary["failures"]) == 1 and summary["failures"][0]["dt"] == -1.0
    assert len(summary["cells"]) == 1
    assert os.path.exists(os.path.join(out, "sweep.csv"))


def test_sweep_rejects_empty_lists(tmp_path):
    with pytest.raises(ValueError):
        sweep(tiny_config("unused"), [], [0], str(tmp_path))


# ------------------------------------------------------------------ phase grid


def test_phase_grid_raster_and_contents(tmp_path):
    cfg = tiny_config(str(tmp_path / "run"))
    run_experiment(cfg)
    out_csv = str(tmp_path / "grid.csv")
    res = value_phase_grid(os.path.join(cfg.out_dir, "checkpoint.bin"),
                           out_csv=out_csv, resolution=9)
    assert res["grid"].shape == (81, 2)
    assert np.all(np.isfinite(res["values"]))
    header, rows = read_rows(out_csv)
    assert header == ["theta", "thetadot", "value", "action"]
    assert len(rows) == 81
    # raster order: angle outer (slow), speed inner (fast)
    assert float(rows[0][0]) == pytest.approx(-math.pi)
    assert float(rows[0][1]) == -8.0
    assert float(rows[1][0]) == pytest.approx(-math.pi)
    assert float(rows[1][1]) == -6.0
    assert float(rows[9][0]) > -math.pi


def test_phase_grid_rejects_wrong_state_dim(tmp_path):
    cfg = tiny_config(str(tmp_path / "lqr"), env="lqr", eval_interval=1.0)
    run_experiment(cfg)
    with pytest.raises(ValueError):
        value_phase_grid(os.path.join(cfg.out_dir, "checkpoint.bin"))


# ------------------------------------------------------------------------ cli


def test_config_file_parsing_and_overrides(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text(
        "# experiment\n"
        "env = lqr\n"
        "dt = 0.05\n"
        "nb_epochs = 3   # inline comment\n"
        "hidden = 8,8\n"
    )
    vals = parse_config_file(str(p))
    assert vals == {"env": "lqr", "dt": 0.05, "nb_epochs": 3, "hidden": (8, 8)}
    cfg = build_config(str(p), {"dt": 0.01, "seed": 4})
    assert cfg.env == "lqr" and cfg.dt == 0.01 and cfg.seed == 4
    assert cfg.hidden == (8, 8) and cfg.nb_epochs == 3

    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 3\n")
    with pytest.raises(ValueError):
        parse_config_file(str(bad))
    bad2 = tmp_path / "bad2.cfg"
    bad2.write_text("just some words\n")
    with pytest.raises(ValueError):
        parse_config_file(str(bad2))


def test_cli_train_and_grid_roundtrip(tmp_path, capsys):
    out = str(tmp_path / "cli_run")
    rc = main(["train", "--env", "pendulum", "--agent", "dau", "--dt", "0.01",
               "--seed", "3", "--parallel-envs", "4", "--epochs", "2",
               "--nb-steps", "5", "--nb-learn", "2", "--batch", "8",
               "--hidden", "8,8", "--eval-interval", "0.2",
               "--eval-episodes", "2", "--out", out])
    assert rc == 0
    assert "rows" in capsys.readouterr().out
    with open(os.path.join(out, "config.json"), encoding="utf-8") as f:
        echo = json.load(f)
    assert echo["config"]["dt"] == 0.01 and echo["config"]["hidden"] == [8, 8]
    assert echo["schema_version"] == 1

    grid_csv = str(tmp_path / "g.csv")
    rc = main(["grid", "--checkpoint", os.path.join(out, "checkpoint.bin"),
               "--out", grid_csv, "--resolution", "5"])
    assert rc == 0 and os.path.exists(grid_csv)


def test_cli_theory_report(tmp_path, capsys):
    report_path = str(tmp_path / "rep.json")
    rc = main(["theory", "policy_improvement", "--out", report_path])
    assert rc == 0
    with open(report_path, encoding="utf-8") as f:
        rep = json.load(f)
    assert rep["name"] == "policy_improvement" and rep["passed"]
    capsys.readouterr()
    with pytest.raises(SystemExit):
        main(["theory", "not_a_check"])


def test_cli_sweep(tmp_path, capsys):
    out = str(tmp_path / "sw")
    rc = main(["sweep", "--env", "lqr", "--agent", "dau", "--parallel-envs", "2",
               "--epochs", "1", "--nb-steps", "5", "--nb-learn", "1",
               "--batch", "4", "--hidden", "8", "--eval-interval", "0.1",
               "--eval-episodes", "2", "--dt-list", "0.01,0.005",
               "--seeds", "0", "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "sweep.csv"))
    assert os.path.exists(os.path.join(out, "sweep_summary.json"))
