import numpy as np
import pytest

from adaptint.lattice import (
    StrengthField,
    build_geometry,
    euclidean_lattice,
    fully_connected,
    random_dilution,
    sample_disorder,
    ultrametric,
    ultrametric_distance,
)


def _symmetric(geom):
    W = geom.dense()
    return np.array_equal(W, W.T) and np.all(np.diag(W) == 0)


@pytest.mark.parametrize("radius,degree", [(1.1, 4), (1.5, 8), (2.1, 12), (2.5, 20)])
def test_square_lattice_degree(radius, degree):
    g = euclidean_lattice((12, 12), radius)
    assert np.all(g.degree() == degree)
    assert _symmetric(g)


def test_open_lattice_corner_degree():
    g = euclidean_lattice((5, 5), 1.1, boundary="open")
    deg = g.degree().reshape(5, 5)
    assert deg[0, 0] == 2 and deg[0, 2] == 3 and deg[2, 2] == 4
    assert _symmetric(g)


def test_lattice_weight_and_positions():
    g = euclidean_lattice((4, 6), 1.1, g=2.0)
    assert g.shape == (4, 6)
    assert tuple(g.positions[7]) == (1, 1)
    assert g.weight(7, 8) == 0.5
    assert g.weight(7, 9) == 0.0
    # periodic neighbor across the edge
    assert g.weight(0, 5) == 0.5


def test_neighbors_sorted_without_self():
    g = euclidean_lattice((6, 6, 6), 1.5)
    for i in (0, 100, 215):
        nb = [j for j, _ in g.neighbors(i)]
        assert nb == sorted(nb) and i not in nb
        assert len(nb) == 18


def test_periodic_radius_limit():
    euclidean_lattice((5, 5), 2.5)
    with pytest.raises(ValueError, match="half the periodic domain"):
        euclidean_lattice((4, 4), 2.5)
    # open boundaries have no such ambiguity
    euclidean_lattice((4, 4), 2.5, boundary="open")


@pytest.mark.parametrize("kwargs", [dict(dims=(0, 4), radius=1.1), dict(dims=(4, 4), radius=0.0),
                                    dict(dims=(4, 4), radius=1.1, g=-1.0), dict(dims=(4, 4), radius=1.1, boundary="mobius")])
def test_lattice_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        euclidean_lattice(**kwargs)


def test_fully_connected():
    g = fully_connected(7, g=4.0)
    assert np.all(g.degree() == 6)
    assert np.allclose(g.dense(), (1 - np.eye(7)) / 4.0)
    assert not g.spatial


def test_ultrametric_distances_and_weights():
    g = ultrametric(3, 3, base=2.0)
    assert g.n_agents == 27
    assert ultrametric_distance(0, 1, 3) == 1
    assert ultrametric_distance(0, 3, 3) == 2
    assert ultrametric_distance(0, 26, 3) == 3
    for i in range(27):
        for j, w in g.neighbors(i):
            assert w == pytest.approx(2.0 ** -ultrametric_distance(i, j, 3))
    assert _symmetric(g)
    with pytest.raises(ValueError):
        ultrametric(2, 3, base=1.0)


def test_random_dilution_reproducible():
    a = random_dilution(40, 0.3, seed=9)
    b = random_dilution(40, 0.3, seed=9)
    c = random_dilution(40, 0.3, seed=10)
    assert np.array_equal(a.indices, b.indices)
    assert not np.array_equal(a.dense(), c.dense())
    assert _symmetric(a)
    assert np.array_equal(random_dilution(10, 1.0, 0).dense(), fully_connected(10).dense())


def test_build_geometry_dispatch():
    assert build_geometry({"kind": "lattice", "dims": (4, 4)}).kind == "lattice"
    assert build_geometry({"kind": "fully_connected", "n_agents": 5}).n_agents == 5
    assert build_geometry({"kind": "ultrametric", "branching": 2, "depth": 3}).n_agents == 8
    assert build_geometry({"kind": "random", "n_agents": 6, "q": 0.5}).n_agents == 6
    with pytest.raises(ValueError, match="unknown geometry kind"):
        build_geometry({"kind": "torus"})


def test_subset_is_induced():
    g = euclidean_lattice((4, 4), 1.1)
    sub = g.subset([0, 1, 5])
    assert sub.n_agents == 3 and sub.params["induced"]
    assert sub.weight(0, 1) == 1.0 and sub.weight(1, 2) == 1.0 and sub.weight(0, 2) == 0.0
    assert tuple(sub.positions[2]) == (1, 1)


def test_diameter():
    assert euclidean_lattice((6, 8), 1.1).diameter() == pytest.approx(5.0)
    assert euclidean_lattice((6, 8), 1.1, boundary="open").diameter() == pytest.approx(10.0)


def test_geometry_arrays_read_only():
    g = euclidean_lattice((4, 4), 1.1)
    with pytest.raises(ValueError):
        g.weights[0] = 3.0


def test_strength_field_norm_and_validation():
    st = StrengthField(p=[1.0, 2.0], s=[3.0, 4.0], beta=0.5)
    assert st.norm == pytest.approx(1.5 + 3.5)
    assert not st.self_esteem
    with pytest.raises(ValueError):
        StrengthField(p=[1.0, 0.0], s=[1.0, 1.0])
    with pytest.raises(ValueError):
        StrengthField(p=[1.0], s=[1.0], beta=-1.0)
    with pytest.raises(ValueError):
        StrengthField(p=[1.0, 1.0], s=[1.0])


def test_sample_disorder_kinds():
    st = sample_disorder({"kind": "uniform", "low": 0.5, "high": 1.5}, 1000, seed=1)
    assert st.self_esteem and 0.5 <= st.p.min() and st.p.max() <= 1.5
    assert abs(st.p.mean() - 1.0) < 0.05
    ln = sample_disorder({"kind": "lognormal", "mu": 0.0, "sigma2": 0.25}, 20000, seed=2, self_esteem=False)
    assert not ln.self_esteem
    assert abs(np.log(ln.p).std() - 0.5) < 0.02
    c = sample_disorder({"kind": "constant", "value": 2.0}, 5, seed=0)
    assert np.all(c.p == 2.0) and c.norm == 4.0
    assert np.array_equal(sample_disorder({"kind": "uniform", "low": 0.5, "high": 1.5}, 10, seed=3).p,
                          sample_disorder({"kind": "uniform", "low": 0.5, "high": 1.5}, 10, seed=3).p)
    with pytest.raises(ValueError):
        sample_disorder({"kind": "uniform", "low": 1.5, "high": 0.5}, 5, seed=0)
    with pytest.raises(ValueError):
        sample_disorder({"kind": "cauchy"}, 5, seed=0)
