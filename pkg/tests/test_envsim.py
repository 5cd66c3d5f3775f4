import numpy as np
import pytest
from hypothesis import given, strategies as st

from olcavoid.envsim import (POSITION, Adversarial, Directional, Environment, Gaussian,
                             NoDisturbance, Sinusoid, collision_check, gen_disturbance,
                             load_obstacles, make_centerline, make_environment, make_offset_corridor,
                             make_profile, make_random_field, make_slalom, obstacles_hit, pass_sides,
                             profile_bound, sense)
from olcavoid.errors import ContractViolation
from olcavoid.game import RewardRecord
from olcavoid.lindyn import double_integrator, stabilize


def random_env(r, n=40, sensor=20.0):
    obs = np.column_stack([r.uniform(-50, 50, n), r.uniform(0, 100, n), r.uniform(0.5, 5, n)])
    return Environment(obs, sensor)


def straight(env, n=None):
    n = env.horizon() + 1 if n is None else n
    return np.array([env.nominal_position(t) for t in range(n)])


def test_sense_empty_and_boundary():
    env = Environment([[0.0, 10.0, 1.0]], 5.0, speed=1.0)
    assert sense(env, [0.0, 0.0], 0).shape == (0, 2)
    got = sense(env, [0.0, 5.0], 5)                 # exactly sensor_radius away
    assert np.array_equal(got, [[0.0, 5.0]])        # nominal point at t=5 is (0, 5)


@given(st.integers(0, 2 ** 32 - 1))
def test_sense_matches_linear_scan(seed):
    r = np.random.default_rng(seed)
    env = random_env(r)
    pos, t = r.uniform(-50, 50, 2) + [0, 50], int(r.integers(0, 20))
    got = sense(env, pos, t)
    want = [tuple(c - env.nominal_position(t)) for c in env.centers
            if np.hypot(*(c - pos)) <= env.sensor_radius]
    assert sorted(map(tuple, got)) == sorted(want)
    d = np.linalg.norm(got + env.nominal_position(t) - pos, axis=1)
    assert np.all(np.diff(d) >= 0)


def test_gaussian_statistics():
    rng = np.random.default_rng(0)
    env = make_centerline(1)
    w = np.array([gen_disturbance(Gaussian(0.0, 0.5), t, np.zeros(4), env, rng)
                  for t in range(25_000)]).ravel()
    assert abs(w.mean()) < 0.01 and abs(w.std() - 0.5) < 0.02
    assert len(w) == 100_000


def test_gaussian_zero_std_and_directional():
    env = make_centerline(1)
    rng = np.random.default_rng(0)
    assert np.array_equal(gen_disturbance(Gaussian(0.3, 0.0), 0, np.zeros(4), env, rng), np.full(4, 0.3))
    assert Directional().mean == 0.5 and Directional().std == 0.5


def test_sinusoid_shape():
    env = make_centerline(1)
    prof = Sinusoid(amplitude=0.5, period=20.0)
    assert np.allclose(gen_disturbance(prof, 10, np.zeros(4), env, None), 0.0, atol=1e-15)
    w = gen_disturbance(prof, 5, np.zeros(4), env, None)
    assert w[0] == pytest.approx(0.5) and np.all(w[1:] == 0)


def test_adversary_pushes_toward_nearest_sensed_obstacle():
    env = make_centerline(3)
    x = np.array([3.0, 0.0, 0.0, 0.0])
    t = int((env.obstacles[0, 1] - 30) / (env.speed * env.dt))
    w = gen_disturbance(Adversarial(5.0), t, x, env, None)
    pos = env.world_position(t, x)
    toward = env.centers[0] - pos
    assert np.linalg.norm(w) == pytest.approx(5.0, abs=1e-12)
    assert np.allclose(w[:2], 5.0 * toward / np.linalg.norm(toward)) and np.all(w[2:] == 0)
    # nothing sensed: pushed back toward the nominal line
    assert np.allclose(gen_disturbance(Adversarial(5.0), 0, x, env, None)[:2], [-5.0, 0.0])


@given(st.integers(0, 2 ** 32 - 1))
def test_adversary_magnitude_exact(seed):
    r = np.random.default_rng(seed)
    env = random_env(r, sensor=30.0)
    x = np.concatenate([r.uniform(-20, 20, 2), r.uniform(-1, 1, 2)])
    t = int(r.integers(0, 20))
    w = gen_disturbance(Adversarial(2.5), t, x, env, None)
    if len(sense(env, env.world_position(t, x), t)):
        assert np.linalg.norm(w) == pytest.approx(2.5, abs=1e-12)


def test_disturbance_streams_are_seeded():
    env = make_centerline(2)
    for prof in (Gaussian(), Directional()):
        a = [gen_disturbance(prof, t, np.zeros(4), env, np.random.default_rng(3)) for t in range(3)]
        b = [gen_disturbance(prof, t, np.zeros(4), env, np.random.default_rng(3)) for t in range(3)]
        assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_profiles_registry():
    assert make_profile("Sinusoid", period=10.0) == Sinusoid(period=10.0)
    assert np.all(gen_disturbance(NoDisturbance(), 0, np.zeros(4), make_centerline(1), None) == 0)
    assert profile_bound(Adversarial(5.0), 4) == 5.0
    with pytest.raises(ContractViolation):
        make_profile("brownian")
    with pytest.raises(ContractViolation):
        Gaussian(std=-1.0)
    with pytest.raises(ContractViolation):
        Sinusoid(period=0.0)


def test_collision_examples():
    env = make_centerline(3)
    assert collision_check(straight(env) + [200.0, 0.0], env) == (0, None)
    count, first = collision_check(straight(env), env)
    assert count == 3 and first is not None


@given(st.integers(0, 2 ** 32 - 1))
def test_collision_matches_linear_scan(seed):
    r = np.random.default_rng(seed)
    env = random_env(r, n=15)
    traj = np.cumsum(r.normal(0, 3, (60, 2)), axis=0) + [0, 50]
    count, first = collision_check(traj, env)
    hits = [[np.hypot(*(p - o[:2])) < o[2] + env.robot_radius for o in env.obstacles] for p in traj]
    want_count = sum(h[j] and (i == 0 or not hits[i - 1][j])
                     for i, h in enumerate(hits) for j in range(len(env.obstacles)))
    rows = [i for i, h in enumerate(hits) if any(h)]
    assert count == want_count
    assert first == (rows[0] if rows else None)
    assert np.array_equal(obstacles_hit(traj, env), np.array(hits).any(axis=0))


def test_pass_sides():
    env = make_centerline(2)
    traj = straight(env)
    assert np.array_equal(pass_sides(traj + [40.0, 0.0], env), [1, 1])
    assert np.array_equal(pass_sides(traj - [40.0, 0.0], env), [-1, -1])
    assert np.array_equal(pass_sides(traj[:3], env), [0, 0])


def test_centerline_geometry():
    one = make_centerline(1)
    assert one.obstacles.shape == (1, 3) and one.obstacles[0, 0] == 0.0
    env = make_centerline(50)
    assert len(env.obstacles) == 50
    assert np.max(np.abs(env.obstacles[:, 0])) <= 1e-12
    assert np.allclose(np.diff(env.obstacles[:, 1]), 100.0)
    # the first row is outside sensor range during the H = 10 warm-up
    assert env.obstacles[0, 1] - env.nominal_position(10)[1] > env.sensor_radius
    with pytest.raises(ContractViolation):
        make_centerline(0)


@pytest.mark.parametrize("offset,width", [(0.0, 40.0), (20.0, 80.0), (60.0, 7.3)])
def test_slalom_gap_width(offset, width):
    env = make_slalom(offset, width)
    for y in np.unique(env.obstacles[:, 1]):
        row = env.obstacles[env.obstacles[:, 1] == y]
        left = row[row[:, 0] < np.mean(row[:, 0])]
        right = row[row[:, 0] > np.mean(row[:, 0])]
        gap = (right[:, 0] - right[:, 2]).min() - (left[:, 0] + left[:, 2]).max()
        assert abs(gap - width) <= 1e-9


def test_slalom_straight_path():
    assert collision_check(straight(make_slalom(0.0, 1000.0)), make_slalom(0.0, 1000.0))[0] == 0
    narrow = make_slalom(0.0, 0.4)                  # narrower than the 0.5 m robot
    assert collision_check(straight(narrow), narrow)[0] >= 1
    with pytest.raises(ContractViolation):
        make_slalom(0.0, 0.0)


def test_slalom_gates_alternate():
    env = make_slalom(30.0, 40.0, n_gates=2)
    ys = np.unique(env.obstacles[:, 1])
    mids = [env.obstacles[env.obstacles[:, 1] == y, 0].mean() for y in ys]
    assert mids == pytest.approx([30.0, -30.0])


def test_other_presets_are_seeded():
    a, b = make_random_field(seed=4), make_random_field(seed=4)
    assert np.array_equal(a.obstacles, b.obstacles) and a.name == "random_field"
    assert np.all(np.abs(a.obstacles[:, 0]) <= 60)
    c = make_offset_corridor(seed=1)
    assert np.array_equal(c.obstacles, make_offset_corridor(seed=1).obstacles)
    assert np.all(np.sign(c.obstacles[:, 0]) == np.where(np.arange(20) % 2 == 0, 1, -1))


def test_obstacle_cost_coupling(rng):
    ss = stabilize(double_integrator(1.0), 0.001, 1.0)
    env = make_centerline(5)
    for _ in range(50):
        t = int(rng.integers(20, 60))
        x, w = rng.normal(0, 5, 4), rng.normal(0, 0.5, 4)
        b0 = ss.Atil @ x + w
        seen = sense(env, env.world_position(t + 1, POSITION @ b0), t + 1)
        if len(seen) == 0:
            continue
        rec = RewardRecord.from_obstacles(t + 1, np.ones(5), b0, seen, POSITION)
        assert np.array_equal(rec.a_list, (POSITION @ b0)[None, :] - seen)


def test_load_obstacles(tmp_path):
    path = tmp_path / "obs.txt"
    path.write_text("# cx cy r\n0 10 2\n3.5, 20, 1  # trailing comment\n\n")
    assert np.array_equal(load_obstacles(path), [[0, 10, 2], [3.5, 20, 1]])
    env = make_environment("file", path=str(path))
    assert env.sensor_radius == 45.0 and len(env.obstacles) == 2
    path.write_text("1 2\n")
    with pytest.raises(ContractViolation):
        load_obstacles(path)
    with pytest.raises(ContractViolation):
        make_environment("maze")


def test_environment_contracts():
    with pytest.raises(ContractViolation):
        Environment([[0.0, 1.0, 0.0]], 5.0)
    with pytest.raises(ContractViolation):
        Environment([[0.0, np.inf, 1.0]], 5.0)
    with pytest.raises(ContractViolation):
        Environment([[0.0, 1.0, 1.0]], 5.0, speed=0.0)
