"""Obstacle-weight game: exponentiated gradient against a trust-region oracle.

Each reward record ``tau`` contributes

    min_j ||a_j + G M b|| ^2 - ||b0 + B M b||_Q^2 - ||M b||_R^2

where ``G = E B`` maps inputs into the space obstacles live in (``E`` selects
the position block of the state; identity by default). Replacing the hard
``min_j`` by a simplex-weighted average ``sum_j c_j (.)`` gives a quadratic in
``m = vec(M)`` whose quadratic part does not depend on ``c`` (the weights sum
to one). The game therefore eigendecomposes once and re-solves only the linear
term every round.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dac import DacPolicy
from .errors import ContractViolation
from .lindyn import StabilizedSystem
from .trs import TrustRegionInstance, TrustRegionSolver


@dataclass(frozen=True)
class RewardRecord:
    """Hindsight data for one reward term.

    ``a_list`` rows are ``E b0 - p_j``. A sentinel record (``far`` set) stands in
    for a step where nothing was sensed; its distance term is the constant
    ``far**2``.
    """

    tau: int
    a_list: np.ndarray
    b: np.ndarray
    b0: np.ndarray
    far: float | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_list, dtype=float))
        if a.shape[0] < 1:
            raise ContractViolation("a record needs at least one obstacle (or a sentinel)")
        object.__setattr__(self, "a_list", a)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).ravel())
        object.__setattr__(self, "b0", np.asarray(self.b0, dtype=float).ravel())

    @property
    def k_tau(self):
        return self.a_list.shape[0]

    @property
    def sentinel(self):
        return self.far is not None

    @classmethod
    def from_obstacles(cls, tau, b, b0, obstacles, proj=None, far=None):
        """Build a record with ``a_j = E b0 - p_j`` (sentinel if no obstacles)."""
        b0 = np.asarray(b0, dtype=float)
        pos = b0 if proj is None else np.asarray(proj) @ b0
        obstacles = np.asarray(obstacles, dtype=float).reshape(-1, pos.shape[0])
        if len(obstacles) == 0:
            if far is None:
                raise ContractViolation("no obstacles sensed and no sentinel distance given")
            a = np.zeros((1, pos.shape[0]))
            a[0, 0] = far
            return cls(tau, a, b, b0, far=float(far))
        return cls(tau, pos[None, :] - obstacles, b, b0)


@dataclass(frozen=True)
class GameParams:
    n_iters: int = 50
    eg_rate: float | None = None
    tol: float = 1e-6

    def __post_init__(self):
        if self.n_iters < 1:
            raise ContractViolation("n_iters must be >= 1")
        if self.eg_rate is not None and not self.eg_rate > 0:
            raise ContractViolation("eg_rate must be positive")


def simplex_ok(c, atol=1e-9):
    c = np.asarray(c, dtype=float)
    return bool(c.size > 0 and np.all(c >= -1e-12) and abs(c.sum() - 1.0) <= atol)


def eg_update(c, losses, eta):
    """Multiplicative-weights step ``c_j <- c_j exp(-eta loss_j)``, renormalized."""
    c = np.asarray(c, dtype=float)
    losses = np.asarray(losses, dtype=float)
    if c.shape != losses.shape:
        raise ContractViolation("c and losses must have the same shape")
    if not np.all(np.isfinite(losses)):
        raise ContractViolation("non-finite losses")
    if np.any(c < 0) or c.sum() <= 0:
        raise ContractViolation("weights must be nonnegative with positive mass")
    logits = np.log(np.where(c > 0, c, 1.0)) - eta * (losses - losses.min())
    w = np.where(c > 0, np.exp(logits - logits[c > 0].max()), 0.0)
    return w / w.sum()


class RecordBank:
    """Packed, append-only store of reward records with running sums.

    Keeps ``sum b b'`` (split by sentinel / real records), the ``Q``-weighted
    linear and constant terms, and flat arrays of all obstacle vectors so that
    instance assembly and objective evaluation are vectorized.
    """

    def __init__(self, ss: StabilizedSystem, Q, R, proj=None):
        self.ss = ss
        self.B = ss.base.B
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.proj = np.eye(ss.d_x) if proj is None else np.asarray(proj, dtype=float)
        self.G = self.proj @ self.B
        self.records = []
        self._bs = []
        self._b0s = []
        self._a = []
        self._owner = []
        self._far = []
        self.S_real = None
        self.S_far = None
        self.lin_Q = None
        self.const_Q = 0.0
        self._cache = None

    def __len__(self):
        return len(self.records)

    def append(self, rec: RewardRecord):
        n = len(self.records)
        b = rec.b
        if self.S_real is None:
            hb = b.shape[0]
            self.S_real = np.zeros((hb, hb))
            self.S_far = np.zeros((hb, hb))
            self.lin_Q = np.zeros((self.B.shape[1], hb))
        outer = np.outer(b, b)
        if rec.sentinel:
            self.S_far += outer
        else:
            self.S_real += outer
        qb0 = self.Q @ rec.b0
        self.lin_Q += np.outer(self.B.T @ qb0, b)
        self.const_Q += float(rec.b0 @ qb0)
        self.records.append(rec)
        self._bs.append(b)
        self._b0s.append(rec.b0)
        self._a.append(rec.a_list)
        self._owner.append(np.full(rec.k_tau, n))
        self._far.append(np.nan if rec.far is None else rec.far)
        self._cache = None

    def extend(self, records):
        for r in records:
            self.append(r)
        return self

    def packed(self):
        if self._cache is None:
            self._cache = (np.array(self._bs), np.array(self._b0s), np.concatenate(self._a),
                           np.concatenate(self._owner), np.array(self._far))
        return self._cache

    @property
    def d_u(self):
        return self.B.shape[1]

    def quadratic(self):
        """``P`` such that the ``c``-independent quadratic part is ``m' P m``."""
        GtG = self.G.T @ self.G
        BtQB = self.B.T @ self.Q @ self.B
        P = (np.kron(self.S_real, GtG - BtQB - self.R)
             + np.kron(self.S_far, -BtQB - self.R))
        return 0.5 * (P + P.T)

    def linear_and_const(self, weights, lam=0.0, P0=None):
        """Linear term and constant of the relaxed objective for given weights."""
        bs, _, a, owner, far = self.packed()
        n = len(self.records)
        c = np.concatenate(weights) if len(weights) else np.zeros(0)
        abar = np.zeros((n, a.shape[1]))
        np.add.at(abar, owner, c[:, None] * a)
        real = np.isnan(far)
        abar[~real] = 0.0
        U = 2.0 * (self.G.T @ abar.T) @ bs - 2.0 * self.lin_Q
        p = U.ravel(order="F")
        if P0 is not None and lam != 0.0:
            p = p + lam * np.asarray(P0, dtype=float).ravel(order="F")
        dist = np.zeros(n)
        np.add.at(dist, owner, c * np.einsum("ij,ij->i", a, a))
        dist[~real] = far[~real] ** 2
        return p, float(dist.sum()) - self.const_Q

    def per_record_terms(self, M_flat):
        """Per-record (distances to every obstacle, Q/R penalty) for a policy.

        Returns ``(d2, owner, penalty)`` with ``d2`` the squared distances
        ``||a_j + G M b||^2`` for every stored obstacle.
        """
        bs, b0s, a, owner, far = self.packed()
        U = bs @ M_flat.T                      # residual inputs, n x d_u
        shift = U @ self.G.T                   # n x d_p
        d2 = np.sum((a + shift[owner]) ** 2, axis=1)
        X = b0s + U @ self.B.T
        penalty = np.einsum("ij,jk,ik->i", X, self.Q, X) + np.einsum("ij,jk,ik->i", U, self.R, U)
        return d2, owner, penalty

    def rewards(self, M_flat):
        """Per-record hard-min rewards for a fixed policy."""
        d2, owner, penalty = self.per_record_terms(M_flat)
        _, _, _, _, far = self.packed()
        n = len(self.records)
        mins = np.full(n, np.inf)
        np.minimum.at(mins, owner, d2)
        real = np.isnan(far)
        mins[~real] = far[~real] ** 2
        return mins - penalty

    def initial_weights(self):
        return [np.full(r.k_tau, 1.0 / r.k_tau) for r in self.records]


def _check_weights(records, weights):
    if len(weights) != len(records):
        raise ContractViolation("one weight vector per record is required")
    for r, c in zip(records, weights):
        c = np.asarray(c, dtype=float)
        if c.shape != (r.k_tau,):
            raise ContractViolation(f"record {r.tau}: weights must have length {r.k_tau}")
        if np.any(c < -1e-12) or abs(c.sum() - 1.0) > 1e-9:
            raise ContractViolation(f"record {r.tau}: weights are not on the simplex")


def build_instance(ss, records, weights, Q, R, lam, P0, D_M, proj=None):
    """Reduce the weighted reward sum to a trust-region instance.

    Returns ``(instance, const)`` with
    ``m' P m + p' m + const == sum_tau [sum_j c_j ||a_j + GMb||^2
    - ||b0 + BMb||_Q^2 - ||Mb||_R^2] + lam <M, P0>`` for ``m = vec(M)``.
    """
    records = list(records)
    if not records:
        raise ContractViolation("at least one record is required")
    _check_weights(records, weights)
    bank = RecordBank(ss, Q, R, proj).extend(records)
    p, const = bank.linear_and_const([np.asarray(c, dtype=float) for c in weights], lam, P0)
    return TrustRegionInstance(bank.quadratic(), p, D_M), const


def true_objective(ss, records, Q, R, lam, P0, M, proj=None):
    """Summed hard-min rewards plus ``lam <M, P0>``."""
    bank = records if isinstance(records, RecordBank) else RecordBank(ss, Q, R, proj).extend(records)
    flat = M.flat if isinstance(M, DacPolicy) else np.asarray(M, dtype=float)
    val = float(bank.rewards(flat).sum())
    if lam and P0 is not None:
        val += lam * float(np.sum(flat * np.asarray(P0)))
    return val


@dataclass
class GameResult:
    M: DacPolicy
    c: list
    value: float
    gap: float
    trace: list
    c_final: list = None       # weights after the last EG round


def default_eg_rate(k_max, n_iters, loss_scale):
    if k_max <= 1:
        return 1.0
    return np.sqrt(np.log(k_max) / n_iters) / max(loss_scale, 1e-12)


def play_game(bank: RecordBank, H, lam, P0, D_M, params: GameParams = GameParams(),
              solver: TrustRegionSolver | None = None, trace=False):
    """Alternate trust-region best responses with exponentiated-gradient weights.

    Returns the iterate with the best hard-min objective, the weights it was a
    best response to, its value, and the relaxation gap at that pair.
    """
    if len(bank) == 0:
        raise ContractViolation("records must be nonempty")
    if solver is None:
        solver = TrustRegionSolver(bank.quadratic(), D_M)
    weights = bank.initial_weights()
    k_max = max(r.k_tau for r in bank.records)
    _, _, _, owner, far = bank.packed()
    real_obs = np.isnan(far)[owner]
    bounds = np.cumsum([0] + [r.k_tau for r in bank.records])
    loss_scale = 0.0
    best = None
    rows = []
    P0_flat = None if P0 is None else np.asarray(P0, dtype=float)
    for n in range(params.n_iters):
        p, const = bank.linear_and_const(weights, lam, P0_flat)
        sol = solver.solve(p, tol=min(params.tol, 1e-3))
        flat = sol.z.reshape(bank.d_u, -1, order="F")
        relaxed = sol.value + const
        d2, _, penalty = bank.per_record_terms(flat)
        mins = np.full(len(bank), np.inf)
        np.minimum.at(mins, owner, d2)
        mins[~np.isnan(far)] = far[~np.isnan(far)] ** 2
        true = float((mins - penalty).sum())
        if P0_flat is not None and lam:
            true += lam * float(np.sum(flat * P0_flat))
        if best is None or true > best[0]:
            best = (true, flat, [w.copy() for w in weights], relaxed - true)
        if trace:
            rows.append((n, relaxed, true, relaxed - true))
        if k_max == 1:
            break
        loss_scale = max(loss_scale, float(d2[real_obs].max()) if real_obs.any() else 0.0)
        eta = params.eg_rate or default_eg_rate(k_max, params.n_iters, loss_scale)
        weights = [eg_update(weights[i], d2[bounds[i]:bounds[i + 1]], eta)
                   if bank.records[i].k_tau > 1 else weights[i]
                   for i in range(len(weights))]
    true, flat, c, gap = best
    M = DacPolicy.from_flat(flat, H, D_M, project=True)
    return GameResult(M=M, c=c, value=true, gap=gap, trace=rows, c_final=weights)


def run_game(ss, records, Q, R, lam, P0, D_M, params: GameParams = GameParams(),
             proj=None, trace=False):
    """Convenience wrapper around :func:`play_game` for a plain record list."""
    records = list(records)
    if not records:
        raise ContractViolation("records must be nonempty")
    bank = RecordBank(ss, Q, R, proj).extend(records)
    H = records[0].b.shape[0] // (ss.d_w + 1)
    return play_game(bank, H, lam, P0, D_M, params, trace=trace)


def write_trace(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "relaxed_value", "true_value", "gap"])
        for n, relaxed, true, gap in rows:
            w.writerow([n, f"{relaxed:.10g}", f"{true:.10g}", f"{gap:.10g}"])
