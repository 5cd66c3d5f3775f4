"""Online learning controller: follow-the-perturbed-leader over disturbance-action policies.

One episode is driven by three calls per step::

    u = act(state, ss, x_t)
    x_next = <plant>(x_t, u)
    observe_and_update(state, ss, x_next, obstacles_next)

``observe_and_update`` recovers ``w_t``, turns the step into a reward record and
picks the next policy, either by re-solving the perturbed leader problem with
the obstacle-weight game (``update="fpl"``) or by one projected gradient step
(``update="gd"``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dac import DacPolicy, DisturbanceHistory, control, project_ball
from .errors import ContractViolation
from .game import GameParams, RecordBank, RewardRecord, play_game, true_objective
from .lindyn import StabilizedSystem, reconstruct_disturbance

UPDATES = ("fpl", "gd")


@dataclass(frozen=True)
class OlcParams:
    T: int = 100
    H: int = 10
    eta: float = 1.0
    lam: float = 1.0
    eps: float = 1e-6
    D_M: float = 20.0
    Q: np.ndarray = 0.001
    R: np.ndarray = 1.0
    update: str = "gd"
    lr: float = 0.008
    gd_objective: str = "mean"      # "mean" or "sum" of past rewards
    game_iters: int = 50
    hindsight_iters: int = 500
    far: float = 45.0               # distance credited when nothing is sensed
    L: int = 5                      # safety window, used only by bench metrics
    xi: float = None

    def __post_init__(self):
        if self.H < 1 or self.T < 1 or self.H > self.T:
            raise ContractViolation("need 1 <= H <= T")
        if not (self.eta > 0 and self.lam > 0):
            raise ContractViolation("eta and lambda must be positive")
        if not self.D_M > 0:
            raise ContractViolation("D_M must be positive")
        if self.update not in UPDATES:
            raise ContractViolation(f"update must be one of {UPDATES}")
        if self.gd_objective not in ("mean", "sum"):
            raise ContractViolation("gd_objective must be 'mean' or 'sum'")
        if not self.lr > 0 or self.game_iters < 1 or self.hindsight_iters < 1:
            raise ContractViolation("lr and iteration budgets must be positive")
        for name in ("Q", "R"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if m.shape[0] != m.shape[1] or np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) < -1e-12:
                raise ContractViolation(f"{name} must be symmetric positive semidefinite")
            if self.xi is not None and np.linalg.norm(m, 2) > self.xi:
                raise ContractViolation(f"||{name}|| exceeds xi")

    def cost_matrices(self, d_x, d_u):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape == (1, 1):
            Q = Q[0, 0] * np.eye(d_x)
        if R.shape == (1, 1):
            R = R[0, 0] * np.eye(d_u)
        if Q.shape != (d_x, d_x) or R.shape != (d_u, d_u):
            raise ContractViolation("Q or R has the wrong size")
        return Q, R


@dataclass
class OlcState:
    params: OlcParams
    policy: DacPolicy
    P0: np.ndarray
    rng: np.random.Generator
    seed: int
    bank: RecordBank
    hist: DisturbanceHistory
    proj: np.ndarray = None
    t: int = 0
    x: np.ndarray = None
    u: np.ndarray = None
    pending: bool = False
    played: list = field(default_factory=list)       # policy used at each step
    disturbances: list = field(default_factory=list)
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    sensed: list = field(default_factory=list)
    rewards: list = field(default_factory=list)


def sample_ball(rng, shape, radius):
    """Uniform sample from the Frobenius ball of the given radius."""
    g = rng.standard_normal(shape)
    n = g.size
    return g / np.linalg.norm(g) * radius * rng.random() ** (1.0 / n)


def init(params: OlcParams, ss: StabilizedSystem, seed=0, proj=None):
    """Fresh learner: draw the fixed perturbation ``P0`` and a random first policy."""
    rng = np.random.default_rng(seed)
    H, d_u, d_w = params.H, ss.d_u, ss.d_w
    P0 = rng.exponential(1.0 / params.eta, size=(d_u, H * (d_w + 1)))
    P0.setflags(write=False)
    M0 = DacPolicy(sample_ball(rng, (H, d_u, d_w + 1), params.D_M), params.D_M)
    Q, R = params.cost_matrices(ss.d_x, ss.d_u)
    if proj is None and ss.d_x == 4 and ss.d_u == 2:
        proj = np.hstack([np.eye(2), np.zeros((2, 2))])
    bank = RecordBank(ss, Q, R, proj)
    hist = DisturbanceHistory(d_w, H)
    return OlcState(params=params, policy=M0, P0=P0, rng=rng, seed=seed, bank=bank,
                    hist=hist, proj=bank.proj)


def act(state: OlcState, ss: StabilizedSystem, x_t):
    """Input for the current step under the current policy."""
    if state.pending:
        raise ContractViolation("act called twice without observe_and_update")
    x_t = np.asarray(x_t, dtype=float)
    u = control(state.policy, ss, x_t, state.hist)
    state.x, state.u, state.pending = x_t, u, True
    state.states.append(x_t)
    state.inputs.append(u)
    state.played.append(state.policy)
    return u


def make_record(state: OlcState, ss: StabilizedSystem, w, obstacles_next):
    """Reward record for the step just taken, built before ``w`` enters the history."""
    b0 = ss.Atil @ state.x + ss.base.D @ w
    b = state.hist.stack(state.params.H)
    return RewardRecord.from_obstacles(state.t + 1, b, b0, obstacles_next,
                                       proj=state.proj, far=state.params.far)


def observe_and_update(state: OlcState, ss: StabilizedSystem, x_next, obstacles_next):
    if not state.pending:
        raise ContractViolation("observe_and_update called before act")
    x_next = np.asarray(x_next, dtype=float)
    w = reconstruct_disturbance(ss.base, state.x, state.u, x_next)
    obstacles_next = np.asarray(obstacles_next, dtype=float).reshape(-1, state.proj.shape[0])
    rec = make_record(state, ss, w, obstacles_next)
    state.bank.append(rec)
    played = state.policy.flat
    state.rewards.append(_record_reward(state.bank, rec, played))
    state.disturbances.append(w)
    state.sensed.append(obstacles_next)
    state.hist.push(w)
    state.t += 1
    state.pending = False
    state.policy = next_policy(state, ss)
    return state


def _record_reward(bank, rec, flat):
    u = flat @ rec.b
    x = rec.b0 + bank.B @ u
    if rec.sentinel:
        d = rec.far ** 2
    else:
        d = float(np.min(np.sum((rec.a_list + bank.G @ u) ** 2, axis=1)))
    return d - float(x @ bank.Q @ x) - float(u @ bank.R @ u)


def next_policy(state: OlcState, ss: StabilizedSystem):
    p = state.params
    H, d_u, d_w = p.H, ss.d_u, ss.d_w
    if state.t < H:
        return DacPolicy(sample_ball(state.rng, (H, d_u, d_w + 1), p.D_M), p.D_M)
    if p.update == "fpl":
        res = play_game(state.bank, H, p.lam, state.P0, p.D_M,
                        GameParams(n_iters=p.game_iters, tol=min(p.eps, 1e-3)))
        return res.M
    # Gradient steps start from the zero policy, not from the last random warm-up draw.
    start = state.policy.flat if state.t > H else np.zeros_like(state.policy.flat)
    grad = objective_gradient(state.bank, start, p.lam, state.P0)
    if p.gd_objective == "mean":
        grad = grad / len(state.bank)
    flat = project_ball(start + p.lr * grad, p.D_M)
    return DacPolicy.from_flat(flat, H, p.D_M, project=True)


def objective_gradient(bank: RecordBank, flat, lam=0.0, P0=None):
    """Gradient in ``M_flat`` of the summed hard-min rewards (plus ``lam <M, P0>``).

    The min is taken at the currently closest obstacle, which is a valid
    supergradient choice at ties.
    """
    bs, b0s, a, owner, far = bank.packed()
    U = bs @ flat.T
    shift = U @ bank.G.T
    d2 = np.sum((a + shift[owner]) ** 2, axis=1)
    order = np.lexsort((d2, owner))
    first = np.ones(len(order), bool)
    first[1:] = owner[order][1:] != owner[order][:-1]
    closest = order[first]                 # one row index into ``a`` per record
    real = np.isnan(far)
    resid = np.where(real[:, None], a[closest] + shift, 0.0)
    X = b0s + U @ bank.B.T
    # d/du of ||a + G u||^2 - ||b0 + B u||_Q^2 - ||u||_R^2
    du = 2.0 * resid @ bank.G - 2.0 * X @ bank.Q @ bank.B - 2.0 * U @ bank.R
    grad = du.T @ bs
    if P0 is not None and lam:
        grad = grad + lam * np.asarray(P0)
    return grad


def hindsight_best(bank: RecordBank, H, params: OlcParams, n_iters=None):
    """Best fixed policy for the logged records (no perturbation) and its total reward."""
    res = play_game(bank, H, 0.0, None, params.D_M,
                    GameParams(n_iters=n_iters or params.hindsight_iters, tol=min(params.eps, 1e-3)))
    return res.M, res.value


def empirical_regret(state: OlcState, ss: StabilizedSystem, n_iters=None):
    """Hindsight-best total reward minus the reward actually collected."""
    _, best = hindsight_best(state.bank, state.params.H, state.params, n_iters)
    return best - float(np.sum(state.rewards))


def replay_inputs(state: OlcState, ss: StabilizedSystem):
    """Recompute every logged input from logged states, disturbances and policies."""
    hist = DisturbanceHistory(ss.d_w, state.params.H)
    out = []
    for x, pol, w in zip(state.states, state.played, state.disturbances):
        out.append(control(pol, ss, x, hist))
        hist.push(w)
    return np.array(out)


def policy_value(state: OlcState, M, lam=0.0):
    return true_objective(None, state.bank, None, None, lam, state.P0, M)


def write_episode_csv(path, rows):
    """Rows are dicts with keys t, x (vector), u, w, reward, min_distance, n_sensed."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if not rows:
            return
        dx, du, dw = len(rows[0]["x"]), len(rows[0]["u"]), len(rows[0]["w"])
        wr.writerow(["t"] + [f"x{i}" for i in range(dx)] + [f"u{i}" for i in range(du)]
                    + [f"w{i}" for i in range(dw)] + ["reward", "min_distance", "n_sensed"])
        for r in rows:
            wr.writerow([r["t"]] + [f"{v:.10g}" for v in r["x"]] + [f"{v:.10g}" for v in r["u"]]
                        + [f"{v:.10g}" for v in r["w"]]
                        + [f"{r['reward']:.10g}", f"{r['min_distance']:.10g}", r["n_sensed"]])


def write_policy_trace(path, policies, every=10):
    """One row per snapshot: step, then the policy's flat form in column-major order."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if not policies:
            return
        n = policies[0].vec.size
        wr.writerow(["t", "frobenius"] + [f"m{i}" for i in range(n)])
        for t in range(0, len(policies), every):
            pol = policies[t]
            wr.writerow([t, f"{np.linalg.norm(pol.M):.10g}"] + [f"{v:.10g}" for v in pol.vec])
