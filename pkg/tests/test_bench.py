from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from olcavoid.bench import experiments as ex
from olcavoid.bench import runner
from olcavoid.bench.cli import main
from olcavoid.bench.config import build, parse_seeds
from olcavoid.envsim import Environment, Gaussian, NoDisturbance, make_centerline
from olcavoid.errors import ConfigError, ContractViolation, SolverFailure
from olcavoid.olc import OlcParams

ROOT = Path(__file__).resolve().parents[1]

SMALL_TOML = """
[system]
preset = "double_integrator"
dt = 1.0

[olc]
H = 10
D_M = 20.0
lr = 0.004

[env]
preset = "centerline"
n_obstacles = 3

[disturbance]
kind = "gaussian"
std = 0.5

[run]
seeds = "0..1"
reanchor = true

[table]
controllers = ["olc", "zero"]

[table.profiles.rand]
kind = "gaussian"

[sweep]
offsets = [0.0, 40.0]
widths = [120.0, 40.0]
trials = 2
n_gates = 2

[regret]
horizons = [20, 40]
"""


def open_field():
    return Environment(np.zeros((0, 3)), 10.0, goal_y=100.0)


def small_cfg(**kw):
    base = runner.RunConfig(env=make_centerline(3), params=OlcParams(lr=0.004), seeds=(0, 1),
                            reanchor=True)
    return replace(base, **kw)


def test_zero_controller_open_field():
    cfg = runner.RunConfig(env=open_field(), profile=NoDisturbance(), controller="zero")
    res = runner.run_episode(cfg, 0)
    assert res.lq_cost == 0.0 and res.collisions == 0 and res.collision_fraction == 0.0
    assert res.T == 20
    assert res.c_obs == pytest.approx(20 * 45.0 ** 2)


def test_zero_controller_hits_every_centerline_obstacle():
    for prof in (Gaussian(), NoDisturbance()):
        res = runner.run_episode(small_cfg(controller="zero", profile=prof), 0)
        assert res.collision_fraction == 1.0 and res.collisions == 3


def test_episode_is_deterministic():
    a = runner.run_episode(small_cfg(), 3)
    b = runner.run_episode(small_cfg(), 3)
    np.testing.assert_equal(a.row(), b.row())


def test_failed_solver_counts_as_collision(monkeypatch):
    def boom(*a, **k):
        raise SolverFailure("no convergence", residual=1.0)
    monkeypatch.setattr(runner.olc, "observe_and_update", boom)
    res = runner.run_episode(small_cfg(), 0)
    assert res.failed and res.collision_fraction == 1.0


def test_step_reward():
    Q, R = np.eye(4), np.eye(2)
    x = np.array([1.0, 0.0, 0.0, 0.0])
    got = runner.step_reward(x[:2], np.array([[4.0, 0.0], [1.0, 2.0]]), x, np.zeros(2), Q, R, 10.0)
    assert got == pytest.approx(4.0 - 1.0)
    assert runner.step_reward(x[:2], np.zeros((0, 2)), x, np.ones(2), Q, R, 10.0) == pytest.approx(97.0)


def test_reanchor_times():
    env = make_centerline(3)                      # rows at 120, 220, 320; 5 m per step
    assert runner.reanchor_times(env, 1000) == [14, 34, 54]
    assert runner.reanchor_times(env, 40) == [14, 34]


def test_aggregates_recompute_from_rows():
    results = ex.run_seeds(small_cfg(seeds=(0, 1, 2)))
    s = ex.aggregate(results)
    rows = [r.row() for r in results]
    assert s["collision_fraction_mean"] == pytest.approx(np.mean([r["collision_fraction"] for r in rows]))
    assert s["lq_cost_std"] == pytest.approx(np.std([r["lq_cost"] for r in rows]))
    assert s["left"] + s["right"] == sum(r["left"] + r["right"] for r in rows)
    assert all(0.0 <= r["collision_fraction"] <= 1.0 for r in rows)


def test_single_cell_table_is_run_aggregate():
    cfg = small_cfg()
    cells = ex.table_experiment(cfg, {"rand": Gaussian()}, controllers=("olc",))
    assert len(cells) == 1
    np.testing.assert_equal(cells[0].summary, ex.aggregate(ex.run_seeds(cfg)))
    assert "olc" in ex.render_table(cells)


def test_one_by_one_sweep_is_run_aggregate():
    cfg = small_cfg()
    grid = ex.sweep_slalom(cfg, [20.0], [80.0], trials=2, slalom_kw={"n_gates": 2})
    assert grid.failure.shape == (1, 1)
    res = grid.runs[(80.0, 20.0)]
    assert grid.failure[0, 0] == np.mean([r.collisions > 0 for r in res])
    with pytest.raises(ValueError):
        ex.sweep_slalom(cfg, [], [80.0])


def test_trend_helpers():
    grid = ex.SweepGrid([0, 1, 2], [3, 2, 1], 1, np.array([[0, .2, .4], [0, .4, .4], [.2, .8, 1]]), {})
    assert grid.spearman_offset(0) == pytest.approx(1.0)
    assert grid.spearman_narrowness(1) == pytest.approx(1.0)
    assert ex.non_increasing([10, 10.9, 8]) and not ex.non_increasing([10, 11.5])


def test_parse_seeds():
    assert parse_seeds("0..3") == (0, 1, 2, 3)
    assert parse_seeds("1,4,7") == (1, 4, 7)
    assert parse_seeds(5) == (5,)
    assert parse_seeds([2, 3]) == (2, 3)
    for bad in ("3..1", "", "a..b"):
        with pytest.raises((ConfigError, ValueError)):
            parse_seeds(bad)


def test_config_errors():
    with pytest.raises(ConfigError):
        build({"olc": {"bogus": 1}})
    with pytest.raises(ConfigError):
        build({"env": {"preset": "maze"}})
    with pytest.raises(ConfigError):
        build({"disturbance": {"kind": "brownian"}})
    with pytest.raises(ConfigError):
        build({"run": {"controller": "rrt"}})
    with pytest.raises(ConfigError):
        build({"olc": {"H": 0}})
    with pytest.raises(ContractViolation):
        runner.RunConfig(env=open_field(), seeds=())


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[olc\nH = 3\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2
    bad.write_text("[env]\npreset = 'maze'\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_run_outputs(tmp_path):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL_TOML)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    header = (out / "run.csv").read_text().splitlines()[0].split(",")
    assert tuple(header) == ex.ROW_FIELDS
    assert (out / "episodes" / "episode_seed4.csv").exists()
    assert (out / "episodes" / "policy_seed4.csv").exists()


def test_cli_solver_failure_exit(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SolverFailure("no convergence", residual=1.0)
    monkeypatch.setattr(runner.olc, "observe_and_update", boom)
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL_TOML)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-logs"]) == 3


def test_formats_doc_lists_columns():
    text = (ROOT / "FORMATS.md").read_text()
    for col in ex.ROW_FIELDS + ("mean_regret_per_T", "collision_fraction_mean", "relaxed_value"):
        assert f"`{col}`" in text
