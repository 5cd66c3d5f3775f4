"""Empirical regret per step against horizon, for a few seeds."""
import argparse
from dataclasses import replace

from olcavoid.bench import experiments as ex
from olcavoid.bench.config import load_config, parse_seeds

ap = argparse.ArgumentParser()
ap.add_argument("--config", default="configs/regret.toml")
ap.add_argument("--seeds", default="0..2")
args = ap.parse_args()

exp = load_config(args.config)
study = ex.regret_study(replace(exp.run, seeds=parse_seeds(args.seeds)), exp.horizons)
curve = ex.regret_curve(study)
for T, v in curve.items():
    print(f"T={T:4d}  mean Reg_T/T = {v:9.2f}")
print("non-increasing (10% slack):", ex.non_increasing(curve.values()))
