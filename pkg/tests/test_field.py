import numpy as np
import pytest

from adaptint.field import (
    FieldGrid,
    StabilityError,
    WField,
    evolve,
    from_w,
    lyapunov,
    rhs,
    rhs_w,
    stability_bound,
    step,
    to_w,
)


def _grid(rng, shape=(12, 12), alpha=0.05, gamma=1.0, boundary="periodic", dx=1.0):
    return FieldGrid(rng.uniform(-1, 1, shape), rng.uniform(0.5, 1.5, shape), gamma, alpha, dx, boundary)


def _lap_reference(u, dx, periodic):
    mode = "wrap" if periodic else "edge"
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        pad = [(1, 1) if k == ax else (0, 0) for k in range(u.ndim)]
        up = np.pad(u, pad, mode=mode)
        sl = lambda a, b: tuple(slice(a, b) if k == ax else slice(None) for k in range(u.ndim))  # noqa: E731
        out += (up[sl(2, None)] - 2 * u + up[sl(0, -2)]) / dx**2
    return out


@pytest.mark.parametrize("shape", [(30,), (10, 12), (5, 6, 7)])
@pytest.mark.parametrize("boundary", ["periodic", "open"])
def test_rhs_matches_reference(rng, shape, boundary):
    g = _grid(rng, shape, alpha=0.3, gamma=0.7, boundary=boundary, dx=0.5)
    fv = g.f * g.v
    expect = -g.v + fv - 0.7 * g.v**3 + 0.3 * _lap_reference(fv, 0.5, boundary == "periodic")
    assert np.allclose(rhs(g), expect, rtol=1e-12, atol=1e-12)


def test_w_form_consistent_with_v_form(rng):
    g = _grid(rng, (9, 11), alpha=0.2, boundary="open")
    assert np.allclose(rhs_w(g), np.sqrt(g.f) * rhs(g), rtol=1e-12, atol=1e-12)


def test_w_round_trip(rng):
    g = _grid(rng)
    wf = to_w(g)
    assert isinstance(wf, WField)
    assert np.allclose(from_w(wf), g.v)
    assert np.allclose(from_w(wf.w, g.f), g.v)
    with pytest.raises(ValueError):
        from_w(wf.w, np.zeros_like(g.f))


def test_grid_validation():
    v = np.zeros((4, 4))
    with pytest.raises(ValueError):
        FieldGrid(v, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        FieldGrid(np.zeros((2, 2, 2, 2)), 1.0)
    with pytest.raises(ValueError):
        FieldGrid(v, 1.0, dx=0.0)
    with pytest.raises(ValueError):
        FieldGrid(v, 1.0, alpha=-1.0)
    with pytest.raises(ValueError):
        FieldGrid(v, 1.0, boundary="reflecting")
    g = FieldGrid(v, 2.0)
    assert g.f.shape == (4, 4) and g.cell_volume == 1.0


def test_stability_bound_formula():
    f = np.full((8, 8), 1.5)
    g = FieldGrid(np.zeros((8, 8)), f, gamma=1.0, alpha=0.5, dx=1.0)
    diffusion = 1.0 / (2 * 2 * 0.5 * 1.5)
    vcap2 = 0.5  # stationary envelope (fmax - 1) / gamma
    reaction = 0.1 / (0.5 + 3 * vcap2)
    assert stability_bound(g) == pytest.approx(min(diffusion, reaction))
    no_coupling = FieldGrid(np.full(4, 3.0), 1.2, gamma=-1.0, alpha=0.0)
    assert stability_bound(no_coupling) == pytest.approx(0.1 / (0.2 + 3 * 9.0))
    assert stability_bound(no_coupling, vmax=0.0) == pytest.approx(0.1)


def test_step_rejects_unstable_dt(rng):
    g = _grid(rng)
    bound = stability_bound(g)
    with pytest.raises(StabilityError) as info:
        step(g, 1.01 * bound)
    assert info.value.bound == pytest.approx(bound)
    with pytest.raises(ValueError):
        step(g, 0.0)
    with pytest.raises(StabilityError):
        evolve(g, 1.0, 2 * bound)


def test_step_is_euler(rng):
    g = _grid(rng)
    dt = 0.5 * stability_bound(g)
    assert np.allclose(step(g, dt).v, g.v + dt * rhs(g), rtol=1e-13, atol=1e-14)


def test_lyapunov_uniform_state():
    f = np.full((6, 6), 2.0)
    v = np.ones((6, 6))
    g = FieldGrid(v, f, gamma=1.0, alpha=0.3, dx=0.5)
    w2 = 2.0
    expect = 36 * 0.25 * ((1 - 2.0) * w2 / 2 + w2**2 / (4 * 2.0))
    assert lyapunov(g) == pytest.approx(expect)


def test_lyapunov_gradient_term_open_boundary():
    v = np.array([0.0, 1.0, 3.0])
    g = FieldGrid(v, 1.0, gamma=0.0, alpha=2.0, dx=1.0, boundary="open")
    # f = 1 removes the local term; edge differences are 1 and 2
    assert lyapunov(g) == pytest.approx(0.5 * 2.0 * (1 + 4))


def test_evolve_records_and_converges():
    f = np.full((8, 8), 2.0)
    g = FieldGrid(np.full((8, 8), 0.5), f, gamma=1.0, alpha=0.1)
    res = evolve(g, 50.0, 0.02, record_every=20, tol=1e-10)
    assert res.converged and not res.aborted
    assert np.allclose(res.grid.v, 1.0, atol=1e-9)
    assert res.times[0] == 0.0 and len(res.times) == len(res.H) == len(res.max_abs_rhs)
    assert all(b <= a + 1e-12 for a, b in zip(res.H, res.H[1:]))


def test_evolve_observer_and_end_record(rng):
    g = _grid(rng, (6, 6))
    dt = 0.5 * stability_bound(g)
    seen = []
    res = evolve(g, 7 * dt, dt, record_every=3, tol=0.0, observers=(lambda t, grid: seen.append(t),))
    assert res.steps == 7
    assert seen == pytest.approx([0.0, 3 * dt, 6 * dt, 7 * dt])


def test_evolve_aborts_on_blow_up():
    g = FieldGrid(np.full(10, 0.5), 3.0, gamma=-1.0, alpha=0.0)
    res = evolve(g, 100.0, 0.5 * stability_bound(g), tol=0.0)
    assert res.aborted and res.steps > 0
    assert np.max(np.abs(res.grid.v)) <= 5.0


def test_evolve_validation(rng):
    g = _grid(rng)
    with pytest.raises(ValueError):
        evolve(g, -1.0, 0.01)
    with pytest.raises(ValueError):
        evolve(g, 1.0, 0.01, record_every=0)
    with pytest.raises(ValueError):
        evolve(g, 1.0, 0.0)
