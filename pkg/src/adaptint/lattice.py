"""Learning-space geometries, couplings and quenched disorder.

A :class:`Geometry` stores the neighbor relation in CSR form (``indptr``,
``indices``, ``weights``) so the dynamics kernels can sweep it without
Python-level loops.  Weights are ``1/g(d)``; pairs with ``g = inf`` are
simply absent.  Self-coupling is not stored here, it enters the dynamics
through ``beta``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Geometry",
    "StrengthField",
    "euclidean_lattice",
    "fully_connected",
    "ultrametric",
    "random_dilution",
    "build_geometry",
    "sample_disorder",
]

KINDS = ("lattice", "fully_connected", "ultrametric", "random")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Geometry:
    """Neighbor lists with coupling weights for one topology family.

    Attributes
    ----------
    kind : str
        One of ``lattice``, ``fully_connected``, ``ultrametric``, ``random``.
    indptr, indices, weights : ndarray
        CSR neighbor structure; row ``i`` lists neighbors ``j != i`` in
        increasing order with weight ``1/g(d(i, j))``.
    positions : ndarray
        ``(N, n)`` integer lattice coordinates, or shape ``(N, 0)`` for
        non-spatial kinds.
    shape : tuple of int
        Per-axis sizes for lattices, ``(N,)`` otherwise.
    boundary : str
        ``periodic`` or ``open``; only meaningful for lattices.
    params : dict
        The construction parameters, kept for reporting.
    """

    kind: str
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    positions: np.ndarray
    shape: tuple
    boundary: str = "open"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("indptr", "indices", "weights", "positions"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def n_agents(self) -> int:
        return len(self.indptr) - 1

    @property
    def spatial(self) -> bool:
        return self.positions.shape[1] > 0

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(j), float(w)) for j, w in zip(self.indices[lo:hi], self.weights[lo:hi])]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def weight(self, i: int, j: int) -> float:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        k = lo + np.searchsorted(self.indices[lo:hi], j)
        if k < hi and self.indices[k] == j:
            return float(self.weights[k])
        return 0.0

    def dense(self) -> np.ndarray:
        """Dense ``(N, N)`` weight matrix; for small systems and tests."""
        n = self.n_agents
        out = np.zeros((n, n))
        rows = np.repeat(np.arange(n), self.degree())
        out[rows, self.indices] = self.weights
        return out

    def diameter(self) -> float:
        """Largest centroid separation the domain allows (lattice units)."""
        if not self.spatial:
            return float(self.n_agents)
        sides = np.asarray(self.shape, dtype=float)
        if self.boundary == "periodic":
            sides = sides / 2.0
        return float(np.sqrt(np.sum(sides**2)))

    def subset(self, sites) -> "Geometry":
        """Geometry induced on ``sites``, renumbered in the given order."""
        sites = np.asarray(sites, dtype=np.int64)
        remap = np.full(self.n_agents, -1, dtype=np.int64)
        remap[sites] = np.arange(len(sites))
        rows, cols, ws = [], [], []
        for new_i, old_i in enumerate(sites):
            lo, hi = self.indptr[old_i], self.indptr[old_i + 1]
            nj = remap[self.indices[lo:hi]]
            keep = nj >= 0
            rows.append(np.full(int(keep.sum()), new_i, dtype=np.int64))
            cols.append(nj[keep])
            ws.append(self.weights[lo:hi][keep])
        return _from_coo(
            self.kind,
            len(sites),
            np.concatenate(rows) if rows else np.zeros(0, np.int64),
            np.concatenate(cols) if cols else np.zeros(0, np.int64),
            np.concatenate(ws) if ws else np.zeros(0),
            positions=self.positions[sites],
            shape=self.shape,
            boundary=self.boundary,
            params=dict(self.params, induced=True),
        )


def _from_coo(kind, n, rows, cols, ws, *, positions=None, shape=None, boundary="open", params=None):
    order = np.lexsort((cols, rows))
    rows, cols, ws = rows[order], cols[order], ws[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    if positions is None:
        positions = np.zeros((n, 0), dtype=np.int64)
    return Geometry(
        kind=kind,
        indptr=indptr,
        indices=cols.astype(np.int64),
        weights=ws.astype(np.float64),
        positions=positions,
        shape=tuple(shape) if shape is not None else (n,),
        boundary=boundary,
        params=params or {},
    )


def euclidean_lattice(dims, radius: float, boundary: str = "periodic", g: float = 1.0) -> Geometry:
    """Regular lattice with constant coupling ``1/g`` inside ``radius``.

    Sites are numbered row-major.  With periodic boundaries the minimum-image
    distance is used, and a radius whose neighborhood would reach half-way
    around any axis is rejected since the wrap-around becomes ambiguous.
    """
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    if not dims or any(d <= 0 for d in dims):
        raise ValueError(f"lattice dims must be positive, got {dims}")
    if not radius > 0:
        raise ValueError(f"interaction radius must be > 0, got {radius}")
    if not g > 0:
        raise ValueError(f"coupling constant g must be > 0, got {g}")
    if boundary not in ("periodic", "open"):
        raise ValueError(f"boundary must be 'periodic' or 'open', got {boundary!r}")

    reach = math.ceil(radius) - 1  # largest integer offset strictly below radius
    if boundary == "periodic":
        for axis, d in enumerate(dims):
            if 2 * reach >= d:
                raise ValueError(
                    f"radius {radius} reaches {reach} sites along axis {axis} of size {d}; "
                    "the finite-range neighborhood must stay below half the periodic domain"
                )

    offsets = [
        off
        for off in itertools.product(range(-reach, reach + 1), repeat=len(dims))
        if 0 < sum(o * o for o in off) < radius * radius
    ]
    coords = np.indices(dims).reshape(len(dims), -1).T  # row-major order
    n = coords.shape[0]
    strides = np.array([int(np.prod(dims[k + 1:])) for k in range(len(dims))], dtype=np.int64)
    shape_arr = np.array(dims, dtype=np.int64)

    rows, cols = [], []
    src = np.arange(n, dtype=np.int64)
    for off in offsets:
        nb = coords + np.array(off)
        if boundary == "periodic":
            nb %= shape_arr
            ok = np.ones(n, dtype=bool)
        else:
            ok = np.all((nb >= 0) & (nb < shape_arr), axis=1)
        rows.append(src[ok])
        cols.append(nb[ok] @ strides)
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    return _from_coo(
        "lattice",
        n,
        rows,
        cols,
        np.full(len(rows), 1.0 / g),
        positions=coords.astype(np.int64),
        shape=dims,
        boundary=boundary,
        params={"dims": dims, "radius": float(radius), "boundary": boundary, "g": float(g)},
    )


def fully_connected(n: int, g: float = 1.0) -> Geometry:
    if n <= 0:
        raise ValueError(f"agent count must be positive, got {n}")
    if not g > 0:
        raise ValueError(f"coupling constant g must be > 0, got {g}")
    i, j = np.nonzero(~np.eye(n, dtype=bool))
    return _from_coo(
        "fully_connected", n, i.astype(np.int64), j.astype(np.int64), np.full(len(i), 1.0 / g),
        params={"n_agents": n, "g": float(g)},
    )


def ultrametric(branching: int, depth: int, base: float = 2.0) -> Geometry:
    """Leaves of a complete ``branching``-ary tree of height ``depth``.

    ``d(i, j)`` is the number of levels up to the lowest common ancestor and
    the weight is ``1/g(d)`` with ``g(d) = base**d``.
    """
    if branching < 2:
        raise ValueError(f"branching factor must be >= 2, got {branching}")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if not base > 1:
        raise ValueError(f"ultrametric base must be > 1 so coupling decays, got {base}")
    n = branching**depth
    idx = np.arange(n)
    d = np.zeros((n, n), dtype=np.int64)
    for level in range(1, depth + 1):
        block = idx // branching**level
        same_above = block[:, None] == block[None, :]
        below = idx // branching ** (level - 1)
        differ_below = below[:, None] != below[None, :]
        d[same_above & differ_below] = level
    i, j = np.nonzero(d)
    return _from_coo(
        "ultrametric", n, i.astype(np.int64), j.astype(np.int64), 1.0 / base ** d[i, j].astype(float),
        params={"branching": branching, "depth": depth, "base": float(base)},
    )


def ultrametric_distance(i: int, j: int, branching: int) -> int:
    level = 0
    while i != j:
        i //= branching
        j //= branching
        level += 1
    return level


def random_dilution(n: int, q: float, seed: int, g: float = 1.0) -> Geometry:
    """Erdos-Renyi graph: each unordered pair linked with probability ``q``."""
    if n <= 0:
        raise ValueError(f"agent count must be positive, got {n}")
    if not 0 < q <= 1:
        raise ValueError(f"connection probability must be in (0, 1], got {q}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < q
    iu, ju = iu[keep], ju[keep]
    rows = np.concatenate([iu, ju]).astype(np.int64)
    cols = np.concatenate([ju, iu]).astype(np.int64)
    return _from_coo(
        "random", n, rows, cols, np.full(len(rows), 1.0 / g),
        params={"n_agents": n, "q": float(q), "seed": int(seed), "g": float(g)},
    )


def build_geometry(spec: dict) -> Geometry:
    """Dispatch on ``spec['kind']``; keys mirror the ``geometry.*`` config section."""
    kind = spec.get("kind", "lattice")
    if kind == "lattice":
        return euclidean_lattice(spec["dims"], spec.get("radius", 1.1), spec.get("boundary", "periodic"), spec.get("g", 1.0))
    if kind == "fully_connected":
        return fully_connected(int(spec["n_agents"]), spec.get("g", 1.0))
    if kind == "ultrametric":
        return ultrametric(int(spec["branching"]), int(spec["depth"]), spec.get("base", 2.0))
    if kind == "random":
        return random_dilution(int(spec["n_agents"]), spec["q"], int(spec.get("seed", 0)), spec.get("g", 1.0))
    raise ValueError(f"unknown geometry kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class StrengthField:
    """Per-agent persuasiveness ``p`` and supportiveness ``s``.

    ``norm`` is the population mean of ``s + p`` and rescales every impact.
    Strength scaling is the identity, so ``p`` and ``s`` enter the impact as
    drawn.
    """

    p: np.ndarray
    s: np.ndarray
    beta: float = 0.0
    norm: float = field(init=False)

    def __post_init__(self):
        p = _freeze(np.asarray(self.p, dtype=np.float64))
        s = _freeze(np.asarray(self.s, dtype=np.float64))
        if p.shape != s.shape or p.ndim != 1:
            raise ValueError("p and s must be 1-D arrays of equal length")
        if np.any(p <= 0) or np.any(s <= 0):
            raise ValueError("strengths must be strictly positive")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "norm", float(p.mean() + s.mean()))

    def __len__(self):
        return len(self.p)

    @property
    def self_esteem(self) -> bool:
        return bool(np.array_equal(self.p, self.s))


def _draw(dist: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    kind = dist.get("kind", "constant")
    if kind == "constant":
        c = float(dist.get("value", 1.0))
        if c <= 0:
            raise ValueError(f"constant strength must be > 0, got {c}")
        return np.full(n, c)
    if kind == "uniform":
        a, b = float(dist["low"]), float(dist["high"])
        if not 0 < a < b:
            raise ValueError(f"uniform strength needs 0 < low < high, got ({a}, {b})")
        return rng.uniform(a, b, n)
    if kind == "lognormal":
        mu, var = float(dist.get("mu", 0.0)), float(dist.get("sigma2", 1.0))
        if var < 0:
            raise ValueError(f"lognormal variance must be >= 0, got {var}")
        return rng.lognormal(mu, math.sqrt(var), n)
    raise ValueError(f"unknown strength distribution {kind!r}")


def sample_disorder(dist: dict, n: int, seed: int, self_esteem: bool = True, beta: float = 0.0) -> StrengthField:
    """Draw per-agent strengths.

    Parameters
    ----------
    dist : dict
        ``{'kind': 'constant', 'value': c}``, ``{'kind': 'uniform', 'low': a,
        'high': b}`` or ``{'kind': 'lognormal', 'mu': mu, 'sigma2': var}``.
    n : int
        Number of agents.
    seed : int
        Seed for the disorder stream.
    self_esteem : bool
        When true ``s`` is a copy of ``p``; otherwise ``s`` is an independent
        draw from the same distribution.
    beta : float
        Self-support scale carried along with the strengths.
    """
    if n < 1:
        raise ValueError(f"agent count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    p = _draw(dist, n, rng)
    s = p.copy() if self_esteem else _draw(dist, n, rng)
    return StrengthField(p=p, s=s, beta=beta)
