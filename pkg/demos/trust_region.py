"""Solve a random trust-region instance and print its KKT certificate."""
import argparse

import numpy as np

from olcavoid.trs import TrustRegionInstance, check_certificate, kkt_residuals, solve

ap = argparse.ArgumentParser()
ap.add_argument("--dim", type=int, default=6)
ap.add_argument("--radius", type=float, default=1.0)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

rng = np.random.default_rng(args.seed)
inst = TrustRegionInstance(rng.uniform(-1, 1, (args.dim, args.dim)), rng.uniform(-1, 1, args.dim),
                           args.radius)
sol = solve(inst)
stat, slack, excess, psd_gap = kkt_residuals(inst, sol)
print(f"value {sol.value:.12g}  |z| {np.linalg.norm(sol.z):.12g}  boundary {sol.on_boundary}")
print(f"multiplier {sol.multiplier:.6g}  (lambda_max(P) = {np.linalg.eigvalsh(inst.P)[-1]:.6g})")
print(f"stationarity {stat:.2e}  slackness {slack:.2e}  certified {check_certificate(inst, sol)}")

# sanity check against random feasible points
z = rng.standard_normal((100_000, args.dim))
z *= (args.radius * rng.random(len(z)) ** (1 / args.dim) / np.linalg.norm(z, axis=1))[:, None]
best = np.max(np.einsum("ij,jk,ik->i", z, inst.P, z) + z @ inst.p)
print(f"best of 1e5 random feasible points {best:.6g}")
