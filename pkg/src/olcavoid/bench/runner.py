"""Closed-loop episodes and the metrics computed from their logs."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .. import olc
from ..envsim import (Environment, Gaussian, collision_check, gen_disturbance, obstacles_hit,
                      pass_sides, sense)
from ..errors import ContractViolation, SolverFailure
from ..lindyn import double_integrator, stabilize, with_gain

CONTROLLERS = ("olc", "nominal", "zero")


@dataclass(frozen=True)
class RunConfig:
    env: Environment
    profile: object = field(default_factory=Gaussian)
    params: olc.OlcParams = field(default_factory=olc.OlcParams)
    controller: str = "olc"
    seeds: tuple = (0,)
    T: int | None = None            # None: long enough to clear the course
    Q_lqr: float = 0.001
    R_lqr: float = 1.0
    K: np.ndarray | None = None
    regret: bool = False            # compute hindsight regret (costly)
    reanchor: bool = False          # re-plan from the racer between obstacles
    trace_every: int = 10

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ContractViolation(f"controller must be one of {CONTROLLERS}")
        if len(self.seeds) == 0:
            raise ContractViolation("seeds must be nonempty")
        if self.T is not None and self.params.L > self.T:
            raise ContractViolation("L must not exceed T")

    def horizon(self):
        return self.T if self.T is not None else self.env.horizon()

    def system(self):
        sys = double_integrator(self.env.dt)
        return with_gain(sys, self.K) if self.K is not None else stabilize(sys, self.Q_lqr, self.R_lqr)


@dataclass
class EpisodeLog:
    states: np.ndarray          # T+1 perturbation states
    inputs: np.ndarray          # T inputs
    disturbances: np.ndarray    # T disturbances
    positions: np.ndarray       # T+1 world positions
    rewards: np.ndarray         # T per-step rewards of the played input
    min_distance: np.ndarray    # T+1 clearance to the nearest obstacle surface
    n_sensed: np.ndarray        # T+1
    sensed: list                # T+1 arrays of relative obstacle positions
    policies: list = None
    learner: object = None


@dataclass
class EpisodeResult:
    seed: int
    controller: str
    T: int
    collisions: int
    collision_fraction: float
    lq_cost: float
    c_obs: float
    left: int
    right: int
    regret: float
    wall_time: float
    failed: bool = False
    log: EpisodeLog = None

    def row(self):
        return {"seed": self.seed, "controller": self.controller, "T": self.T,
                "collisions": self.collisions, "collision_fraction": self.collision_fraction,
                "lq_cost": self.lq_cost, "c_obs": self.c_obs, "left": self.left,
                "right": self.right, "regret": self.regret, "failed": int(self.failed)}


def _streams(seed):
    ss = np.random.SeedSequence(int(seed))
    learner, noise = ss.spawn(2)
    return int(learner.generate_state(1)[0]), np.random.default_rng(noise)


def step_reward(pos_rel, sensed, x_next, r, Q, R, far):
    """Distance-to-nearest-sensed-obstacle term minus the quadratic penalties."""
    if len(sensed):
        d = float(np.min(np.sum((pos_rel - sensed) ** 2, axis=1)))
    else:
        d = far ** 2
    return d - float(x_next @ Q @ x_next) - float(r @ R @ r)


def simulate(cfg: RunConfig, seed, keep_policies=False):
    """Run one closed-loop episode; returns ``(EpisodeLog, failed)``."""
    env = cfg.env
    ss = cfg.system()
    T = cfg.horizon()
    params = replace(cfg.params, T=max(T, cfg.params.H))
    Q, R = params.cost_matrices(ss.d_x, ss.d_u)
    learner_seed, noise = _streams(seed)
    learner = olc.init(params, ss, learner_seed) if cfg.controller == "olc" else None
    A, B, D, K = ss.base.A, ss.base.B, ss.base.D, ss.K

    resets = set(reanchor_times(env, T)) if cfg.reanchor else set()
    x = np.zeros(ss.d_x)
    states, inputs, dists, rewards = [x], [], [], []
    positions = [env.world_position(0, x)]
    sensed = [sense(env, positions[0], 0)]
    policies = []
    failed = False
    for t in range(T):
        if cfg.controller == "olc" and failed:
            u = K @ x                       # zero policy for the rest of the episode
        elif cfg.controller == "olc":
            u = olc.act(learner, ss, x)
            if keep_policies:
                policies.append(learner.policy)
        elif cfg.controller == "nominal":
            u = K @ x
        else:
            u = np.zeros(ss.d_u)
        w = gen_disturbance(cfg.profile, t, x, env, noise, ss.d_w)
        x_next = A @ x + B @ u + D @ w
        pos = env.world_position(t + 1, x_next)
        seen = sense(env, pos, t + 1)
        rewards.append(step_reward(x_next[:2], seen, x_next, u - K @ x, Q, R, params.far))
        if learner is not None and not failed:
            try:
                olc.observe_and_update(learner, ss, x_next, seen)
            except SolverFailure:
                failed = True
        x = np.zeros(ss.d_x) if t + 1 in resets else x_next
        if t + 1 in resets:
            pos = env.world_position(t + 1, x)
        states.append(x)
        inputs.append(u)
        dists.append(w)
        positions.append(pos)
        sensed.append(seen)
    positions = np.array(positions)
    clearance = _clearance(positions, env)
    log = EpisodeLog(states=np.array(states), inputs=np.array(inputs),
                     disturbances=np.array(dists), positions=positions,
                     rewards=np.array(rewards), min_distance=clearance,
                     n_sensed=np.array([len(s) for s in sensed]), sensed=sensed,
                     policies=policies or None, learner=learner)
    return log, failed


def reanchor_times(env: Environment, T):
    """Steps at which the nominal point crosses a midpoint between obstacle rows.

    At these steps the plan is re-anchored at the racer, which in perturbation
    coordinates resets the state to zero.
    """
    ys = np.unique(env.obstacles[:, 1]) if len(env.obstacles) else np.zeros(0)
    mids = list(0.5 * (ys[1:] + ys[:-1]))
    if len(ys) > 1 and ys[0] - 0.5 * (ys[1] - ys[0]) > 0:
        # the first row gets the same half-spacing approach as every other row
        mids.insert(0, ys[0] - 0.5 * (ys[1] - ys[0]))
    step = env.speed * env.dt
    return [int(np.ceil(m / step)) for m in mids if np.ceil(m / step) <= T]


def _clearance(positions, env):
    if len(env.obstacles) == 0:
        return np.full(len(positions), np.inf)
    d = np.linalg.norm(positions[:, None, :] - env.centers[None], axis=2) - env.obstacles[None, :, 2]
    return d.min(axis=1) - env.robot_radius


def c_obs(log: EpisodeLog, env: Environment, Q, R, K, L, far):
    """Safety objective with the ``min over tau in [1, L]`` look-ahead window.

    Obstacles sensed at ``t`` are compared with the racer positions at
    ``t+1..t+L`` in the world frame, so the nominal plan's own motion over the
    window does not count as clearance.
    """
    X = log.states
    T = len(log.inputs)
    total = 0.0
    for t in range(T):
        obs = log.sensed[t]
        hi = min(t + L, T)
        if len(obs) and hi > t:
            world = obs + env.nominal_position(t)
            ahead = log.positions[t + 1:hi + 1]
            d = float(np.min(np.sum((ahead[:, None, :] - world[None]) ** 2, axis=2)))
        else:
            d = far ** 2
        r = log.inputs[t] - K @ X[t]
        total += d - float(X[t] @ Q @ X[t]) - float(r @ R @ r)
    return total


def lq_cost(log: EpisodeLog, Q, R):
    X, U = log.states[:-1], log.inputs
    return float(np.einsum("ij,jk,ik->", X, Q, X) + np.einsum("ij,jk,ik->", U, R, U))


def run_episode(cfg: RunConfig, seed, keep_log=False):
    t0 = time.perf_counter()
    ss = cfg.system()
    log, failed = simulate(cfg, seed)
    env = cfg.env
    params = cfg.params
    Q, R = params.cost_matrices(ss.d_x, ss.d_u)
    count, _ = collision_check(log.positions, env)
    hit = obstacles_hit(log.positions, env)
    # only obstacles the nominal plan reaches within the horizon count
    reached = env.obstacles[:, 1] <= env.nominal_position(len(log.inputs))[1]
    frac = float(hit[reached].mean()) if reached.any() else 0.0
    if failed:
        frac = 1.0
    sides = pass_sides(log.positions, env)
    regret = float("nan")
    if cfg.regret and cfg.controller == "olc" and not failed:
        regret = olc.empirical_regret(log.learner, ss)
    res = EpisodeResult(
        seed=int(seed), controller=cfg.controller, T=len(log.inputs), collisions=count,
        collision_fraction=frac, lq_cost=lq_cost(log, Q, R),
        c_obs=c_obs(log, env, Q, R, ss.K, params.L, params.far),
        left=int(np.sum(sides[~hit] < 0)), right=int(np.sum(sides[~hit] > 0)),
        regret=regret, wall_time=time.perf_counter() - t0, failed=failed)
    if keep_log:
        res.log = log
    return res
