"""Exact trust-region subproblem solver and the reward-to-TRS reduction.

Problem (maximization form)::

    max_{||z|| <= radius}  z' P z + p' z

Global optimality conditions: there is ``lam >= 0`` with ``(lam I - P) z = p / 2``,
``lam I - P`` positive semidefinite and ``lam (radius - ||z||) = 0``. The solver
eigendecomposes ``P`` once, then finds ``lam`` from the secular equation
``||z(lam)|| = radius`` by safeguarded Newton iteration on ``1/||z|| - 1/radius``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, SolverFailure

MAX_SECULAR_ITERS = 200


@dataclass(frozen=True)
class TrustRegionInstance:
    P: np.ndarray
    p: np.ndarray
    radius: float

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        p = np.array(self.p, dtype=float).ravel()
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != p.shape[0]:
            raise ContractViolation(f"P {P.shape} and p {p.shape} are inconsistent")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(p)) and np.isfinite(self.radius)):
            raise ContractViolation("non-finite trust-region data")
        if not self.radius > 0:
            raise ContractViolation("radius must be positive")
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "p", p)

    @property
    def dim(self):
        return self.p.shape[0]

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return float(z @ self.P @ z + self.p @ z)


@dataclass(frozen=True)
class TrsSolution:
    z: np.ndarray
    value: float
    on_boundary: bool
    multiplier: float


def _canonical_sign(z, atol):
    """+1 if the first coordinate with |z_i| > atol is positive (or none exists)."""
    for zi in z:
        if abs(zi) > atol:
            return 1.0 if zi > 0 else -1.0
    return 1.0


class TrustRegionSolver:
    """Solver for a fixed ``(P, radius)`` pair and varying linear terms.

    The eigendecomposition is computed once, so repeated solves with different
    ``p`` (as in the obstacle-weight game) cost ``O(d^2)`` each.
    """

    def __init__(self, P, radius):
        P = np.asarray(P, dtype=float)
        P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(P)):
            raise ContractViolation("non-finite P")
        if not radius > 0:
            raise ContractViolation("radius must be positive")
        self.P = P
        self.radius = float(radius)
        evals, evecs = np.linalg.eigh(P)
        order = np.argsort(evals)[::-1]
        self.evals = evals[order]
        self.evecs = evecs[:, order]
        self.scale = max(1.0, float(np.max(np.abs(self.evals))) if len(evals) else 1.0)

    def solve(self, p, tol=1e-10):
        if not 0 < tol <= 1e-3:
            raise ContractViolation("tol must lie in (0, 1e-3]")
        p = np.asarray(p, dtype=float).ravel()
        if not np.all(np.isfinite(p)):
            raise ContractViolation("non-finite p")
        D = self.radius
        e = self.evals
        V = self.evecs
        g = V.T @ p
        e_max = e[0]
        eig_tol = 1e-12 * self.scale

        if e_max < -eig_tol:
            y = -0.5 * g / e
            if np.linalg.norm(y) <= D:
                return self._finish(V @ y, 0.0, p, on_boundary=False)

        lo = max(e_max, 0.0)
        top = e >= e_max - eig_tol
        g_scale = max(1.0, float(np.linalg.norm(p)))
        if e_max >= -eig_tol and np.all(np.abs(g[top]) <= 1e-13 * g_scale):
            # Possible hard case: the top eigenspace carries no linear term.
            rest = ~top
            y = np.zeros_like(g)
            if lo > 0 or np.all(e[rest] < -eig_tol):
                y[rest] = 0.5 * g[rest] / (lo - e[rest])
            ny = np.linalg.norm(y)
            if ny <= D:
                return self._hard_case(y, top, lo, p)

        # Easy case: unique lam > lo with ||z(lam)|| = D.
        pnorm = float(np.linalg.norm(p))
        hi = lo + pnorm / (2.0 * D) + 1e-300
        lam = hi
        lo_b = lo
        resid = np.inf
        for _ in range(MAX_SECULAR_ITERS):
            d = lam - e
            y = 0.5 * g / d
            ny = np.linalg.norm(y)
            resid = ny - D
            if abs(resid) <= 1e-13 * D:
                break
            if ny > D:
                lo_b = lam
            else:
                hi = lam
            # psi(lam) = 1/||y|| - 1/D,  psi' = (sum y_i^2/d_i) / ||y||^3
            dpsi = float(np.sum(y * y / d)) / ny ** 3
            step = (1.0 / ny - 1.0 / D) / dpsi if dpsi > 0 else np.inf
            new = lam - step
            if not (lo_b < new < hi) or not np.isfinite(new):
                new = 0.5 * (lo_b + hi)
            if new == lam:
                break
            lam = new
        else:
            raise SolverFailure("secular equation did not converge", residual=abs(resid) / D)
        if abs(resid) > 1e-8 * D:
            raise SolverFailure("secular equation did not converge", residual=abs(resid) / D)
        z = V @ y
        z *= D / np.linalg.norm(z)
        return self._finish(z, lam, p, on_boundary=True)

    def _hard_case(self, y, top, lam, p):
        D = self.radius
        V = self.evecs
        Vt = V[:, top]
        # Deterministic direction in the top eigenspace: projection of the first
        # standard basis vector that is not orthogonal to it.
        direction = None
        for k in range(V.shape[0]):
            proj = Vt @ Vt[k]
            if np.linalg.norm(proj) > 1e-8:
                direction = proj / np.linalg.norm(proj)
                break
        z_rest = V @ y
        tau = np.sqrt(max(D * D - float(z_rest @ z_rest), 0.0))
        z = z_rest + tau * direction
        if tau > 0:
            alt = z_rest - tau * direction
            if _canonical_sign(z, 1e-12 * D) < 0 <= _canonical_sign(alt, 1e-12 * D):
                z = alt
        return self._finish(z, lam, p, on_boundary=tau > 0 or np.isclose(np.linalg.norm(z), D))

    def _finish(self, z, lam, p, on_boundary):
        value = float(z @ self.P @ z + p @ z)
        return TrsSolution(z=z, value=value, on_boundary=bool(on_boundary), multiplier=float(lam))


def solve(inst: TrustRegionInstance, tol=1e-10):
    """Global maximizer of ``z'Pz + p'z`` over the ball of radius ``inst.radius``."""
    return TrustRegionSolver(inst.P, inst.radius).solve(inst.p, tol=tol)


def kkt_residuals(inst: TrustRegionInstance, sol: TrsSolution):
    """Return (stationarity, complementary slackness, feasibility excess, dual PSD gap)."""
    z = sol.z
    stat = float(np.linalg.norm(2 * inst.P @ z + inst.p - 2 * sol.multiplier * z))
    slack = float(sol.multiplier * (inst.radius - np.linalg.norm(z)))
    excess = float(np.linalg.norm(z) - inst.radius)
    psd_gap = float(np.max(np.linalg.eigvalsh(inst.P)) - sol.multiplier)
    return stat, slack, excess, psd_gap


def check_certificate(inst, sol, tol=1e-8):
    stat, slack, excess, psd_gap = kkt_residuals(inst, sol)
    scale = 1.0 + float(np.linalg.norm(inst.p))
    return (stat <= tol * scale and abs(slack) <= tol * scale
            and excess <= inst.radius * 1e-9 and psd_gap <= tol * max(1.0, np.abs(inst.P).max()))


def dump_instance(inst: TrustRegionInstance, path, const=0.0):
    with open(path, "w") as fh:
        json.dump({"P": inst.P.tolist(), "p": inst.p.tolist(),
                   "radius": inst.radius, "const": float(const)}, fh)


def load_instance(path):
    with open(path) as fh:
        d = json.load(fh)
    return TrustRegionInstance(np.array(d["P"]), np.array(d["p"]), float(d["radius"])), d.get("const", 0.0)
