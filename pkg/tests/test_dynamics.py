import numpy as np
import pytest

from adaptint.dynamics import (
    NO_NOISE,
    AgentSystem,
    NoiseModel,
    impact,
    impacts,
    magnetization,
    make_initial,
    mean_field_locals,
    mean_field_step,
    run,
    self_support,
    step_sync,
)
from adaptint.lattice import StrengthField, euclidean_lattice, fully_connected, sample_disorder

UNIFORM = {"kind": "uniform", "low": 0.5, "high": 1.5}


def _system(geom, beta=0.0, seed=0, sigma=None, self_esteem=True):
    st = sample_disorder(UNIFORM, geom.n_agents, seed=seed, self_esteem=self_esteem, beta=beta)
    if sigma is None:
        sigma = np.where(np.random.default_rng(seed + 100).random(geom.n_agents) < 0.5, 1, -1)
    return AgentSystem(np.asarray(sigma, dtype=np.int8), geom, st)


def test_impact_matches_dense_formula():
    sys0 = _system(fully_connected(12), beta=0.7, seed=1, self_esteem=False)
    W = sys0.geometry.dense()
    st, s = sys0.strengths, sys0.sigma.astype(float)
    expect = (W @ st.p - s * (W @ (st.p * s)) - W @ st.s - s * (W @ (st.s * s))) / st.norm - 2 * 0.7 * st.s / st.norm
    assert np.allclose(impacts(sys0), expect, rtol=1e-13, atol=1e-13)
    assert impact(sys0, 4) == pytest.approx(expect[4], rel=1e-13)
    with pytest.raises(IndexError):
        impact(sys0, 12)


def test_two_agents_hand_computed():
    # agent 0 disagrees with a strong persuader -> flips; agent 1 is supported by beta
    geom = fully_connected(2)
    st = StrengthField(p=[1.0, 3.0], s=[1.0, 3.0], beta=10.0)
    sys0 = AgentSystem([1, -1], geom, st)
    norm = 4.0
    assert impact(sys0, 0) == pytest.approx((3.0 * 2 - 0) / norm - 2 * 10.0 * 1.0 / norm)
    nxt, flips = step_sync(sys0)
    # strong self-support keeps both states
    assert flips == 0 and nxt.sigma.tolist() == [1, -1]
    weak = AgentSystem([1, -1], geom, StrengthField(p=[1.0, 3.0], s=[1.0, 3.0]))
    nxt, flips = step_sync(weak)
    assert nxt.sigma.tolist() == [-1, 1] and flips == 2


def test_step_advances_time_and_is_pure():
    sys0 = _system(euclidean_lattice((8, 8), 1.5))
    before = sys0.sigma.copy()
    nxt, _ = step_sync(sys0)
    assert nxt.t == 1 and sys0.t == 0
    assert np.array_equal(sys0.sigma, before)
    with pytest.raises(ValueError):
        sys0.sigma[0] = 1


def test_zero_argument_keeps_state():
    # isolated agents with beta = 0 see an update argument of exactly 0
    geom = euclidean_lattice((3,), 1.0, boundary="open")
    st = StrengthField(p=np.ones(3), s=np.ones(3))
    sys0 = AgentSystem([1, -1, 1], geom, st)
    assert geom.degree().sum() == 0
    nxt, flips = step_sync(sys0)
    assert flips == 0 and np.array_equal(nxt.sigma, sys0.sigma)


def test_threads_do_not_change_results():
    sys0 = _system(euclidean_lattice((20, 20), 2.5), beta=0.3, seed=4)
    noise = NoiseModel("site", "gaussian", 0.4, seed=2)
    ref = run(sys0, noise, 30, stop_on_cycle=False, threads=1)
    for threads in (2, 3, 8):
        got = run(sys0, noise, 30, stop_on_cycle=False, threads=threads)
        assert got.m == ref.m and got.flips == ref.flips
        assert np.array_equal(got.final.sigma, ref.final.sigma)
    a, _ = mean_field_step(sys0, threads=1)
    b, _ = mean_field_step(sys0, threads=5)
    assert np.array_equal(a.sigma, b.sigma)


def test_noise_streams():
    n = NoiseModel("site", "gaussian", 1.0, seed=3)
    assert np.array_equal(n.draw(5, 10), n.draw(5, 10))
    assert not np.array_equal(n.draw(5, 10), n.draw(6, 10))
    # draws for a prefix of agents do not depend on the population size
    assert np.array_equal(n.draw(2, 20)[:10], n.draw(2, 10))
    g = NoiseModel("global", "uniform", 0.5, seed=3).draw(0, 6)
    assert np.all(g == g[0]) and abs(g[0]) <= 0.5
    m = NoiseModel("site", "gaussian", 1.0, seed=3, mirror=True)
    assert np.array_equal(m.draw(5, 10), -n.draw(5, 10))
    assert NO_NOISE.silent and NO_NOISE.draw(0, 5) is None
    assert NoiseModel("site", amplitude=0.0).silent
    with pytest.raises(ValueError):
        NoiseModel("thermal")
    with pytest.raises(ValueError):
        NoiseModel("site", amplitude=-1.0)


def test_noise_mirror_pairs_flipped_runs():
    sys0 = _system(euclidean_lattice((16, 16), 1.5), beta=0.2, seed=7)
    noise = NoiseModel("site", "gaussian", 0.6, seed=1)
    a = run(sys0, noise, 40, stop_on_cycle=False)
    b = run(sys0.with_state(-sys0.sigma), NoiseModel("site", "gaussian", 0.6, seed=1, mirror=True), 40,
            stop_on_cycle=False)
    assert np.array_equal(a.final.sigma, -b.final.sigma)
    assert a.m == [-x for x in b.m]


def test_mean_field_locals_and_rule():
    sys0 = _system(fully_connected(9), beta=0.4, seed=2, self_esteem=False)
    st = sys0.strengths
    W = sys0.geometry.dense()
    a = self_support(st)
    assert np.allclose(a, (st.s.mean() - st.p.mean()) / st.norm + 0.4 * st.s / st.norm)
    nxt, _ = mean_field_step(sys0)
    for i in range(9):
        m_i, a_i = mean_field_locals(sys0, i)
        assert m_i == pytest.approx(W[i] @ ((st.s + st.p) * sys0.sigma) / st.norm)
        if abs(m_i) > abs(a_i):
            expect = np.sign(m_i)
        elif abs(a_i) > abs(m_i):
            expect = sys0.sigma[i] * np.sign(a_i)
        else:
            expect = sys0.sigma[i]
        assert nxt.sigma[i] == expect


def test_run_fixed_point_and_snapshots():
    sys0 = _system(euclidean_lattice((10, 10), 1.5), seed=3)
    traj = run(sys0, steps=200, snapshot_every=2)
    assert traj.stop in ("fixed_point", "two_cycle")
    assert traj.m[0] == magnetization(sys0)
    assert len(traj.m) == len(traj.flips) == traj.steps + 1
    assert 0 in traj.snapshots and all(t % 2 == 0 for t in traj.snapshots)
    if traj.stop == "fixed_point":
        assert traj.flips[-1] == 0


def test_run_detects_two_cycle():
    # two agents that swap every step
    geom = fully_connected(2)
    sys0 = AgentSystem([1, -1], geom, StrengthField(p=[1.0, 1.0], s=[1.0, 1.0]))
    traj = run(sys0, steps=50)
    assert traj.stop == "two_cycle"
    assert np.array_equal(traj.previous.sigma, -traj.final.sigma)
    assert traj.steps <= 3


def test_run_with_noise_runs_to_max_steps():
    sys0 = _system(euclidean_lattice((8, 8), 1.5), seed=5)
    traj = run(sys0, NoiseModel("site", "gaussian", 2.0, seed=0), 25)
    assert traj.stop == "max_steps" and traj.steps == 25


def test_run_validation():
    sys0 = _system(fully_connected(4))
    with pytest.raises(ValueError):
        run(sys0, steps=-1)
    with pytest.raises(ValueError):
        run(sys0, rule="async")


def test_agent_system_validation():
    geom = fully_connected(3)
    st = StrengthField(p=np.ones(3), s=np.ones(3))
    with pytest.raises(ValueError):
        AgentSystem([1, 0, 1], geom, st)
    with pytest.raises(ValueError):
        AgentSystem([1, 1], geom, st)
    with pytest.raises(ValueError):
        AgentSystem([1, 1, 1], geom, StrengthField(p=np.ones(2), s=np.ones(2)))


def test_make_initial():
    geom = euclidean_lattice((10, 10), 1.1)
    assert np.all(make_initial(geom, "uniform", sign=-1) == -1)
    r = make_initial(geom, "mixed", m0=0.5, seed=1)
    assert abs(magnetization(r) - 0.5) < 0.25
    c = make_initial(geom, "mixed", m0=0.6, layout="clustered")
    assert np.count_nonzero(c == -1) == 20
    # the minority block sits at the center
    minority = geom.positions[c == -1]
    assert np.all(np.abs(minority - 4.5).max(axis=1) <= 3)
    crit = make_initial(geom, "critical", seed=2)
    assert set(np.unique(crit)) <= {-1, 1}
    assert np.array_equal(crit, make_initial(geom, "critical", seed=2))
    with pytest.raises(ValueError):
        make_initial(fully_connected(5), "mixed", m0=0.2, layout="clustered")
    with pytest.raises(ValueError):
        make_initial(geom, "mixed", m0=1.5)
    with pytest.raises(ValueError):
        make_initial(geom, "uniform", sign=0)
