"""Command line entry point: ``olcavoid {run,table,sweep,regret}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure in any episode.
Every CSV is a pure function of (config, seeds); timings go to stderr only.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from .. import olc
from ..errors import ConfigError, SolverFailure
from . import experiments as ex
from .config import load_config, parse_seeds
from .runner import simulate

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{float(v):.10g}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _result_rows(results, extra=()):
    return [list(extra) + [r.row()[k] for k in ex.ROW_FIELDS] for r in results]


def _summary_rows(results):
    s = ex.aggregate(results)
    return [[k, _fmt(v)] for k, v in s.items()]


def _episode_logs(cfg, seeds, outdir):
    """Per-seed step logs and policy traces (OLC only) for ``run``."""
    os.makedirs(outdir, exist_ok=True)
    for seed in seeds:
        log, _ = simulate(cfg, seed, keep_policies=cfg.controller == "olc")
        rows = []
        for t in range(len(log.inputs)):
            rows.append({"t": t, "x": log.states[t], "u": log.inputs[t], "w": log.disturbances[t],
                         "reward": log.rewards[t], "min_distance": log.min_distance[t + 1],
                         "n_sensed": int(log.n_sensed[t + 1])})
        olc.write_episode_csv(os.path.join(outdir, f"episode_seed{seed}.csv"), rows)
        if log.policies:
            olc.write_policy_trace(os.path.join(outdir, f"policy_seed{seed}.csv"),
                                   log.policies, every=cfg.trace_every)


def cmd_run(exp, args):
    cfg = exp.run
    results = ex.run_seeds(cfg, jobs=args.jobs)
    write_csv(os.path.join(args.out, "run.csv"), ex.ROW_FIELDS, _result_rows(results))
    write_csv(os.path.join(args.out, "run_summary.csv"), ["metric", "value"], _summary_rows(results))
    if not args.no_logs:
        _episode_logs(cfg, cfg.seeds, os.path.join(args.out, "episodes"))
    return results


def cmd_table(exp, args):
    cells = ex.table_experiment(exp.run, exp.profiles, exp.controllers, jobs=args.jobs)
    rows, runs = [], []
    for c in cells:
        s = c.summary
        rows.append([c.controller, c.profile, s["n"], s["lq_cost_mean"], s["lq_cost_std"],
                     s["collision_fraction_mean"], s["collision_fraction_std"], s["left"], s["right"]])
        runs += _result_rows(c.results, extra=(c.profile,))
    write_csv(os.path.join(args.out, "table.csv"),
              ["controller", "profile", "n", "lq_mean", "lq_std", "collision_fraction_mean",
               "collision_fraction_std", "left", "right"], rows)
    write_csv(os.path.join(args.out, "table_runs.csv"), ("profile",) + ex.ROW_FIELDS, runs)
    text = ex.render_table(cells)
    with open(os.path.join(args.out, "table.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return [r for c in cells for r in c.results]


def cmd_sweep(exp, args):
    sw = dict(exp.sweep)
    offsets = [float(v) for v in sw.pop("offsets", [0.0, 20.0, 40.0, 60.0])]
    widths = [float(v) for v in sw.pop("widths", [160.0, 120.0, 80.0, 40.0])]
    trials = int(sw.pop("trials", 5))
    env = exp.run.env
    sw.setdefault("sensor_radius", env.sensor_radius)
    sw.setdefault("robot_radius", env.robot_radius)
    sw.setdefault("speed", env.speed)
    sw["dt"] = env.dt
    grid = ex.sweep_slalom(exp.run, offsets, widths, trials, slalom_kw=sw, jobs=args.jobs)
    write_csv(os.path.join(args.out, "sweep.csv"), ["width"] + [f"offset={o:g}" for o in offsets],
              [[w] + list(grid.failure[i]) for i, w in enumerate(widths)])
    cells = []
    for (w, o), res in grid.runs.items():
        cells += _result_rows(res, extra=(w, o))
    write_csv(os.path.join(args.out, "sweep_runs.csv"), ("width", "offset") + ex.ROW_FIELDS, cells)
    return [r for res in grid.runs.values() for r in res]


def cmd_regret(exp, args):
    study = ex.regret_study(exp.run, exp.horizons, jobs=args.jobs)
    rows = []
    for T, res in study.items():
        rows += [[T, r.seed, r.regret, r.regret / T] for r in res]
    write_csv(os.path.join(args.out, "regret.csv"), ["T", "seed", "regret", "regret_per_T"], rows)
    curve = ex.regret_curve(study)
    write_csv(os.path.join(args.out, "regret_summary.csv"), ["T", "mean_regret_per_T"],
              [[T, v] for T, v in curve.items()])
    return [r for res in study.values() for r in res]


COMMANDS = {"run": cmd_run, "table": cmd_table, "sweep": cmd_sweep, "regret": cmd_regret}


def build_parser():
    ap = argparse.ArgumentParser(prog="olcavoid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "episodes for one configuration"),
                        ("table", "controllers x disturbance profiles"),
                        ("sweep", "slalom failure-rate grid"),
                        ("regret", "empirical regret versus horizon")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="TOML experiment file")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--seed", type=int, help="single seed")
        g.add_argument("--seeds", help="seed range a..b (inclusive) or comma list")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--update", choices=olc.UPDATES, help="override the policy update rule")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        if name == "run":
            p.add_argument("--no-logs", action="store_true", help="skip per-step episode logs")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    seeds = None
    try:
        if args.seed is not None:
            seeds = (args.seed,)
        elif args.seeds is not None:
            seeds = parse_seeds(args.seeds)
        exp = load_config(args.config, update=args.update, seeds=seeds)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    try:
        results = COMMANDS[args.command](exp, args)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"{args.command}: {len(results)} episodes in {time.perf_counter() - t0:.1f}s",
          file=sys.stderr)
    if any(r.failed for r in results):
        print("solver failure in at least one episode (counted as collisions)", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
