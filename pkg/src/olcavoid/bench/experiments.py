"""Multi-episode experiments: controller-profile cost table, slalom sweep, regret scaling."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from ..envsim import make_slalom
from .runner import RunConfig, run_episode

ROW_FIELDS = ("seed", "controller", "T", "collisions", "collision_fraction", "lq_cost",
              "c_obs", "left", "right", "regret", "failed")


def _one(args):
    cfg, seed = args
    return run_episode(cfg, seed)


def run_seeds(cfg: RunConfig, seeds=None, jobs=1):
    """Episodes for every seed, returned in seed order whatever the pool does."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    work = [(cfg, s) for s in seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one, work))
    return [_one(w) for w in work]


def aggregate(results):
    """Mean and (population) std of the per-seed metrics."""
    out = {"n": len(results)}
    for key in ("collision_fraction", "lq_cost", "c_obs", "regret"):
        vals = np.array([getattr(r, key) for r in results], dtype=float)
        out[key + "_mean"] = float(np.mean(vals)) if len(vals) else float("nan")
        out[key + "_std"] = float(np.std(vals)) if len(vals) else float("nan")
    left = sum(r.left for r in results)
    right = sum(r.right for r in results)
    out["left"] = left
    out["right"] = right
    out["left_share"] = left / (left + right) if left + right else float("nan")
    out["failed"] = sum(int(r.failed) for r in results)
    return out


def dominant_side_share(results):
    """Share of clean passes on the more common side, pooled over seeds."""
    left = sum(r.left for r in results)
    right = sum(r.right for r in results)
    return max(left, right) / (left + right) if left + right else float("nan")


@dataclass
class TableCell:
    controller: str
    profile: str
    results: list

    @property
    def summary(self):
        return aggregate(self.results)


def table_experiment(cfg: RunConfig, profiles: dict, controllers=("olc", "nominal", "zero"), jobs=1):
    """Rows are controllers, columns are disturbance profiles."""
    cells = []
    for ctrl in controllers:
        for name, prof in profiles.items():
            c = replace(cfg, controller=ctrl, profile=prof)
            cells.append(TableCell(ctrl, name, run_seeds(c, jobs=jobs)))
    return cells


def render_table(cells):
    """Aligned text: ``lq mean +- std`` over ``collision fraction`` per cell."""
    profiles = list(dict.fromkeys(c.profile for c in cells))
    ctrls = list(dict.fromkeys(c.controller for c in cells))
    by = {(c.controller, c.profile): c.summary for c in cells}
    width = 22
    lines = ["controller".ljust(12) + "".join(p.rjust(width) for p in profiles)]
    for ctrl in ctrls:
        top = ctrl.ljust(12)
        bot = "".ljust(12)
        for p in profiles:
            s = by[(ctrl, p)]
            top += f"{s['lq_cost_mean']:.4g} +- {s['lq_cost_std']:.3g}".rjust(width)
            bot += f"{s['collision_fraction_mean']:.3f}".rjust(width)
        lines += [top, bot]
    return "\n".join(lines) + "\n"


@dataclass
class SweepGrid:
    offsets: list
    widths: list
    trials: int
    failure: np.ndarray            # len(widths) x len(offsets)
    runs: dict

    def spearman_offset(self, row):
        """Rank correlation of failure rate with offset along one width row."""
        return _spearman(self.offsets, self.failure[row])

    def spearman_narrowness(self, col):
        """Rank correlation of failure rate with narrowness (minus width) along one column."""
        return _spearman([-w for w in self.widths], self.failure[:, col])


def _spearman(x, y):
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        return 0.0
    return float(stats.spearmanr(x, y).statistic)


def sweep_slalom(cfg: RunConfig, offsets, widths, trials=5, slalom_kw=None, jobs=1):
    """Failure rate (share of runs with any collision) per (width, offset) cell."""
    if not offsets or not widths or trials < 1:
        raise ValueError("offsets, widths and trials must be nonempty")
    slalom_kw = dict(slalom_kw or {})
    fail = np.zeros((len(widths), len(offsets)))
    runs = {}
    seeds = list(cfg.seeds)[:trials] if len(cfg.seeds) >= trials else list(range(trials))
    for i, w in enumerate(widths):
        for j, off in enumerate(offsets):
            env = make_slalom(off, w, **slalom_kw)
            res = run_seeds(replace(cfg, env=env), seeds, jobs=jobs)
            runs[(w, off)] = res
            fail[i, j] = np.mean([r.collisions > 0 or r.failed for r in res])
    return SweepGrid(list(offsets), list(widths), trials, fail, runs)


def regret_study(cfg: RunConfig, horizons=(50, 100, 200, 400), jobs=1):
    """Empirical regret per (T, seed); returns ``{T: [EpisodeResult, ...]}``."""
    out = {}
    for T in horizons:
        c = replace(cfg, T=T, regret=True, controller="olc")
        out[T] = run_seeds(c, jobs=jobs)
    return out


def regret_curve(study):
    """Mean of ``Reg_T / T`` over seeds for each horizon."""
    return {T: float(np.mean([r.regret / T for r in res])) for T, res in study.items()}


def non_increasing(values, slack=0.10):
    """True when every consecutive ratio stays within ``1 + slack``."""
    v = list(values)
    return all(b <= a + slack * abs(a) for a, b in zip(v, v[1:]))
