"""Planar racer environments: obstacle fields, sensing, disturbances, collisions.

World frame: ``X`` is lateral, ``Y`` is the direction of travel. The nominal plan
is a straight line ``X = 0`` traversed at constant speed, so the nominal state
at step ``t`` is ``(0, v dt t, 0, v)`` with zero nominal input. Everything the
controller sees is in perturbation coordinates (racer minus nominal).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .lindyn import double_integrator  # noqa: F401  (re-exported preset)

POSITION = np.hstack([np.eye(2), np.zeros((2, 2))])


@dataclass(frozen=True)
class Environment:
    obstacles: np.ndarray           # rows (cx, cy, radius), world frame
    sensor_radius: float
    robot_radius: float = 0.25
    speed: float = 5.0
    dt: float = 1.0
    goal_y: float = None
    name: str = "custom"

    def __post_init__(self):
        obs = np.array(self.obstacles, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(obs)):
            raise ContractViolation("obstacles must be finite")
        if np.any(obs[:, 2] <= 0) or self.sensor_radius <= 0 or self.robot_radius <= 0:
            raise ContractViolation("all radii must be positive")
        if self.speed <= 0 or self.dt <= 0:
            raise ContractViolation("speed and dt must be positive")
        obs.setflags(write=False)
        object.__setattr__(self, "obstacles", obs)
        if self.goal_y is None:
            top = float(obs[:, 1].max() + obs[:, 2].max()) if len(obs) else 0.0
            object.__setattr__(self, "goal_y", top + self.sensor_radius)

    @property
    def centers(self):
        return self.obstacles[:, :2]

    def nominal_state(self, t):
        return np.array([0.0, self.speed * self.dt * t, 0.0, self.speed])

    def nominal_position(self, t):
        return np.array([0.0, self.speed * self.dt * t])

    def horizon(self):
        """Steps for the nominal plan to reach the goal band."""
        return int(np.ceil(self.goal_y / (self.speed * self.dt)))

    def world_position(self, t, x):
        return self.nominal_position(t) + np.asarray(x)[:2]


def sense(env: Environment, racer_position, t):
    """Obstacles within the (closed) sensor ball, relative to the nominal point at ``t``.

    Ordered by distance from the racer, then by angle.
    """
    pos = np.asarray(racer_position, dtype=float)
    if len(env.obstacles) == 0:
        return np.zeros((0, 2))
    rel = env.centers - pos
    dist = np.hypot(rel[:, 0], rel[:, 1])
    idx = np.nonzero(dist <= env.sensor_radius)[0]
    if len(idx) == 0:
        return np.zeros((0, 2))
    ang = np.arctan2(rel[idx, 1], rel[idx, 0])
    order = np.lexsort((ang, dist[idx]))
    return env.centers[idx[order]] - env.nominal_position(t)


# -- disturbance profiles ---------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    std: float = 0.5

    def __post_init__(self):
        if self.std < 0:
            raise ContractViolation("std must be >= 0")


@dataclass(frozen=True)
class Directional(Gaussian):
    mean: float = 0.5
    std: float = 0.5


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float = 0.5
    period: float = 20.0
    phase: float = 0.0
    axis: int = 0

    def __post_init__(self):
        if self.amplitude < 0 or self.period <= 0:
            raise ContractViolation("amplitude must be >= 0 and period > 0")


@dataclass(frozen=True)
class Adversarial:
    magnitude: float = 5.0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ContractViolation("magnitude must be >= 0")


@dataclass(frozen=True)
class NoDisturbance:
    pass


PROFILES = {"gaussian": Gaussian, "directional": Directional, "sinusoid": Sinusoid,
            "adversarial": Adversarial, "none": NoDisturbance}


def make_profile(kind, **params):
    try:
        cls = PROFILES[kind.lower()]
    except KeyError:
        raise ContractViolation(f"unknown disturbance profile {kind!r}") from None
    return cls(**params)


def profile_bound(profile, d_w):
    """A norm bound ``C_w`` for the profile (probabilistic for Gaussians)."""
    if isinstance(profile, Gaussian):
        return float(np.sqrt(d_w) * (abs(profile.mean) + 3.0 * profile.std)) or 1e-6
    if isinstance(profile, Sinusoid):
        return profile.amplitude or 1e-6
    if isinstance(profile, Adversarial):
        return profile.magnitude or 1e-6
    return 1e-6


def gen_disturbance(profile, t, x, env: Environment, rng, d_w=4):
    """Disturbance ``w_t`` for the racer in perturbation state ``x`` at step ``t``."""
    if isinstance(profile, Gaussian):
        return profile.mean + profile.std * rng.standard_normal(d_w)
    w = np.zeros(d_w)
    if isinstance(profile, Sinusoid):
        w[profile.axis] = profile.amplitude * np.sin(2 * np.pi * t / profile.period + profile.phase)
    elif isinstance(profile, Adversarial):
        pos = env.world_position(t, x)
        seen = sense(env, pos, t)
        if len(seen):
            direction = seen[0] + env.nominal_position(t) - pos
        else:
            direction = np.array([-pos[0], 0.0])
        norm = np.linalg.norm(direction)
        if norm > 0:
            w[:2] = profile.magnitude * direction / norm
    elif not isinstance(profile, NoDisturbance):
        raise ContractViolation(f"unsupported profile {profile!r}")
    return w


# -- collisions and pass sides ---------------------------------------------

def collision_check(trajectory, env: Environment):
    """Count collisions along a world-frame trajectory of positions.

    A step collides with an obstacle when the center distance is below the sum
    of radii; a contiguous run of colliding steps against the same obstacle
    counts once. Returns ``(count, first_index or None)``.
    """
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))[:, :2]
    if len(env.obstacles) == 0 or len(traj) == 0:
        return 0, None
    hit = collision_matrix(traj, env)
    starts = hit & ~np.vstack([np.zeros((1, hit.shape[1]), bool), hit[:-1]])
    count = int(starts.sum())
    rows = np.nonzero(hit.any(axis=1))[0]
    return count, (int(rows[0]) if len(rows) else None)


def collision_matrix(traj, env):
    d = np.linalg.norm(traj[:, None, :] - env.centers[None, :, :], axis=2)
    return d < env.obstacles[None, :, 2] + env.robot_radius


def obstacles_hit(trajectory, env):
    """Boolean per obstacle: was it ever touched."""
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))[:, :2]
    if len(env.obstacles) == 0:
        return np.zeros(0, bool)
    return collision_matrix(traj, env).any(axis=0)


def pass_sides(trajectory, env):
    """Side on which each obstacle was passed: -1 left, +1 right, 0 not passed.

    Evaluated at the first step where the racer's ``Y`` crosses the obstacle
    center, by linear interpolation of the lateral offset.
    """
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))[:, :2]
    sides = np.zeros(len(env.obstacles), dtype=int)
    for k, (cx, cy, _) in enumerate(env.obstacles):
        above = traj[:, 1] >= cy
        idx = np.nonzero(above[1:] & ~above[:-1])[0]
        if len(idx) == 0:
            continue
        i = idx[0]
        y0, y1 = traj[i, 1], traj[i + 1, 1]
        s = (cy - y0) / (y1 - y0) if y1 != y0 else 0.0
        lateral = traj[i, 0] + s * (traj[i + 1, 0] - traj[i, 0]) - cx
        sides[k] = 1 if lateral > 0 else -1
    return sides


# -- environment generators --------------------------------------------------

def make_centerline(n_obstacles=50, spacing=100.0, obstacle_radius=30.0, *, first=None,
                    sensor_radius=45.0, robot_radius=0.25, speed=5.0, dt=1.0):
    """Obstacles evenly spaced on the nominal line ``X = 0``.

    ``first`` defaults to ``1.2 * spacing``: with the default sensor and speed the
    first obstacle comes into view only after the learner's random warm-up.
    """
    if n_obstacles < 1:
        raise ContractViolation("n_obstacles must be >= 1")
    first = 1.2 * spacing if first is None else first
    ys = first + spacing * np.arange(n_obstacles)
    obs = np.column_stack([np.zeros(n_obstacles), ys, np.full(n_obstacles, obstacle_radius)])
    return Environment(obs, sensor_radius, robot_radius, speed, dt,
                       goal_y=float(ys[-1] + spacing / 2.0), name="centerline")


def make_slalom(offset, gate_width, n_gates=4, *, gate_spacing=100.0, wall_radius=5.0,
                wall_half_length=60.0, first=None, sensor_radius=45.0, robot_radius=0.25,
                speed=5.0, dt=1.0):
    """Walls of tangent circles leaving one gate per row.

    Gate ``g`` is centred at ``X = +offset`` for even ``g`` and ``-offset`` for odd
    ``g``; the free gap between the innermost circle surfaces is ``gate_width``.
    """
    if gate_width <= 0:
        raise ContractViolation("gate_width must be positive")
    first = gate_spacing if first is None else first
    rows = []
    step = 2.0 * wall_radius
    n_side = max(1, int(np.ceil(wall_half_length / step)))
    for g in range(n_gates):
        y = first + g * gate_spacing
        centre = offset if g % 2 == 0 else -offset
        inner = gate_width / 2.0 + wall_radius
        for k in range(n_side):
            rows.append((centre - inner - k * step, y, wall_radius))
            rows.append((centre + inner + k * step, y, wall_radius))
    ys = first + gate_spacing * (n_gates - 1)
    return Environment(np.array(rows), sensor_radius, robot_radius, speed, dt,
                       goal_y=float(ys + gate_spacing), name="slalom")


def make_random_field(n_obstacles=30, length=1000.0, width=120.0, radius=(5.0, 15.0), seed=0,
                      **kw):
    """Uniformly scattered obstacles in a corridor ``|X| <= width/2``."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-width / 2, width / 2, n_obstacles)
    ys = rng.uniform(0.1 * length, length, n_obstacles)
    rs = rng.uniform(radius[0], radius[1], n_obstacles)
    kw.setdefault("sensor_radius", 45.0)
    env = Environment(np.column_stack([xs, ys, rs]), goal_y=1.1 * length, **kw)
    return Environment(env.obstacles, env.sensor_radius, env.robot_radius, env.speed, env.dt,
                       env.goal_y, name="random_field")


def make_offset_corridor(n_obstacles=20, spacing=60.0, offset=10.0, radius=8.0, seed=0, **kw):
    """Obstacles alternating around the nominal line with seeded lateral jitter."""
    rng = np.random.default_rng(seed)
    ys = spacing * (1 + np.arange(n_obstacles))
    xs = offset * np.where(np.arange(n_obstacles) % 2 == 0, 1.0, -1.0)
    xs = xs + rng.uniform(-0.3, 0.3, n_obstacles) * offset
    kw.setdefault("sensor_radius", 45.0)
    env = Environment(np.column_stack([xs, ys, np.full(n_obstacles, radius)]),
                      goal_y=float(ys[-1] + spacing), **kw)
    return Environment(env.obstacles, env.sensor_radius, env.robot_radius, env.speed, env.dt,
                       env.goal_y, name="offset_corridor")


def load_obstacles(path):
    """Read ``cx cy r`` triples, one per line; ``#`` starts a comment."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                vals = [float(v) for v in line.replace(",", " ").split()]
                if len(vals) != 3:
                    raise ContractViolation(f"expected 'cx cy r', got {line!r}")
                rows.append(vals)
    return np.array(rows).reshape(-1, 3)


PRESETS = {"centerline": make_centerline, "slalom": make_slalom,
           "random_field": make_random_field, "offset_corridor": make_offset_corridor}


def make_environment(name, **params):
    if name == "file":
        path = params.pop("path")
        sensor = params.pop("sensor_radius", 45.0)
        return Environment(load_obstacles(path), sensor, **params)
    if name not in PRESETS:
        raise ContractViolation(f"unknown environment preset {name!r}")
    return PRESETS[name](**params)


@dataclass
class RacerState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def as_vector(self):
        return np.concatenate([self.position, self.velocity])
