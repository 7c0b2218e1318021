"""Stationary profiles, boundary layers, clusters and the order parameter."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from adaptint._backend import kernels
from adaptint.field import FieldGrid, evolve
from adaptint.lattice import Geometry, euclidean_lattice

__all__ = [
    "StationaryProfile",
    "BoundaryLayer",
    "Cluster",
    "ClusterReport",
    "EnsembleStats",
    "thomas_fermi",
    "exponential_regime",
    "layer_thickness",
    "boundary_layer",
    "find_crossings",
    "airy_tail",
    "field_to_state",
    "grid_geometry",
    "detect_clusters",
    "mean_separation",
    "order_parameter",
    "collapse_time",
    "minority_lifetime",
    "decay_width",
    "Plateau",
    "staircase",
    "ensemble_stats",
]

ZERO_FIELD = 1e-8
DENSE_MAX = 1.0
MIDDLE_MAX = 10.0


@dataclass(frozen=True, eq=False)
class StationaryProfile:
    v0: np.ndarray
    regime: str
    branch: np.ndarray  # +1, -1 or 0 per cell


def thomas_fermi(f, gamma: float, branch: str = "positive", *, seed: int | None = None, like=None) -> StationaryProfile:
    """Pointwise stationary state with the coupling term dropped.

    For ``gamma > 0`` cells with ``f > 1`` sit on ``+-sqrt((f-1)/gamma)`` and
    the rest at 0.  ``branch`` picks the sign: ``positive``, ``negative``,
    ``random`` (needs ``seed``) or ``from_field`` (sign of ``like``; zeros go
    positive).  For ``gamma < 0`` the only stable state is ``v = 0``.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise ValueError("strength field f must be strictly positive")
    if gamma == 0:
        raise ValueError(
            "gamma = 0 has no non-trivial stationary profile; use exponential_regime for the linear flow"
        )
    if gamma < 0:
        return StationaryProfile(np.zeros_like(f), "gamma_negative", np.zeros(f.shape, dtype=np.int8))
    active = f > 1.0
    if branch == "positive":
        signs = np.ones(f.shape, dtype=np.int8)
    elif branch == "negative":
        signs = -np.ones(f.shape, dtype=np.int8)
    elif branch == "random":
        if seed is None:
            raise ValueError("random branch needs a seed")
        signs = np.where(np.random.default_rng(seed).random(f.shape) < 0.5, 1, -1).astype(np.int8)
    elif branch == "from_field":
        if like is None:
            raise ValueError("from_field branch needs a reference field")
        signs = np.where(np.asarray(like) < 0, -1, 1).astype(np.int8)
    else:
        raise ValueError(f"unknown branch rule {branch!r}")
    signs = np.where(active, signs, 0).astype(np.int8)
    mag = np.sqrt(np.where(active, f - 1.0, 0.0) / gamma)
    return StationaryProfile(signs * mag, "gamma_positive", signs)


def exponential_regime(v0, f, t: float) -> np.ndarray:
    """Solution of the linear flow ``dv/dt = (f - 1) v``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return np.exp((np.asarray(f, dtype=np.float64) - 1.0) * t) * np.asarray(v0, dtype=np.float64)


@dataclass(frozen=True)
class BoundaryLayer:
    x0: tuple
    thickness: float
    f0: float
    fprime: float
    normal: tuple = ()

    def airy_scale(self, x) -> np.ndarray:
        """Rescaled coordinate ``z`` along the normal, pointing into ``f < 1``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        nrm = np.asarray(self.normal) if self.normal else np.ones(x.shape[-1])
        return -((x - np.asarray(self.x0)) @ nrm) / self.thickness


def layer_thickness(alpha: float, f0: float, fprime: float) -> float:
    """``l = (alpha f0^2 / f')^(1/3)``."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    return (alpha * f0 * f0 / abs(fprime)) ** (1.0 / 3.0)


def boundary_layer(f, alpha: float, x0, dx: float = 1.0, tol: float = 1e-9) -> BoundaryLayer:
    """Layer thickness at crossing point ``x0`` (grid coordinates) of ``f``.

    ``f'`` is the magnitude of the centered-difference gradient interpolated
    at ``x0``; the normal points up the gradient.
    """
    f = np.asarray(f, dtype=np.float64)
    x0 = tuple(float(c) for c in np.atleast_1d(x0))
    if len(x0) != f.ndim:
        raise ValueError(f"x0 has {len(x0)} coordinates, field is {f.ndim}-dimensional")
    coords = np.array(x0)[:, None]
    f0 = float(ndimage.map_coordinates(f, coords, order=1, mode="nearest")[0])
    grads = np.gradient(f, dx) if f.ndim > 1 else [np.gradient(f, dx)]
    g = np.array([ndimage.map_coordinates(gk, coords, order=1, mode="nearest")[0] for gk in grads])
    fprime = float(np.linalg.norm(g))
    if fprime <= tol:
        raise ValueError(f"tangential crossing at {x0}: |f'| = {fprime:g}, thickness undefined")
    return BoundaryLayer(x0, layer_thickness(alpha, f0, fprime), f0, fprime, tuple(g / fprime))


def find_crossings(f, dx: float = 1.0, periodic: bool = False):
    """Edges where ``f - 1`` changes sign.

    Returns ``(points, slopes, inside)``: interpolated crossing coordinates
    in grid units, the normal derivative ``|f_b - f_a| / dx`` across each
    edge, and the flat index of the ``f > 1`` cell of the edge.
    """
    f = np.asarray(f, dtype=np.float64)
    pts, slopes, inside = [], [], []
    idx = np.indices(f.shape)
    flat = np.arange(f.size).reshape(f.shape)
    for axis in range(f.ndim):
        if f.shape[axis] == 1:
            continue
        if periodic:
            fb = np.roll(f, -1, axis)
            fb_i = np.roll(flat, -1, axis)
            sl = (slice(None),) * f.ndim
        else:
            sl = tuple(slice(0, -1) if k == axis else slice(None) for k in range(f.ndim))
            sl_b = tuple(slice(1, None) if k == axis else slice(None) for k in range(f.ndim))
            fb, fb_i = f[sl_b], flat[sl_b]
        fa, fa_i = f[sl], flat[sl]
        cross = (fa - 1.0) * (fb - 1.0) < 0
        if not np.any(cross):
            continue
        a, b = fa[cross], fb[cross]
        frac = (1.0 - a) / (b - a)
        base = np.stack([ix[sl][cross] for ix in idx], axis=1).astype(float)
        base[:, axis] += frac
        if periodic:
            base[:, axis] %= f.shape[axis]
        pts.append(base)
        slopes.append(np.abs(b - a) / dx)
        inside.append(np.where(a > 1.0, fa_i[cross], fb_i[cross]))
    if not pts:
        return np.zeros((0, f.ndim)), np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate(pts), np.concatenate(slopes), np.concatenate(inside)


def airy_tail(z):
    """Asymptotic Airy decay ``z^(-1/4) exp(-2/3 z^(3/2))`` for ``z > 0``."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("airy_tail is the z > 0 asymptote; got z <= 0")
    out = z**-0.25 * np.exp(-(2.0 / 3.0) * z**1.5)
    return float(out) if out.ndim == 0 else out


def field_to_state(v) -> np.ndarray:
    """Sign of a field, with ``|v| < 1e-8`` assigned the majority sign."""
    v = np.asarray(v, dtype=np.float64).ravel()
    s = np.sign(v).astype(np.int8)
    s[np.abs(v) < ZERO_FIELD] = 0
    major = 1 if np.sum(s, dtype=np.int64) >= 0 else -1
    s[s == 0] = major
    return s


def grid_geometry(shape, boundary: str = "periodic") -> Geometry:
    """Nearest-neighbor lattice used to label clusters of field states."""
    shape = tuple(shape)
    if boundary == "periodic" and min(shape) < 3:
        boundary = "open"
    return euclidean_lattice(shape, 1.1, boundary)


@dataclass(frozen=True)
class Cluster:
    id: int
    sign: int
    size: int
    centroid: tuple
    boundary_len: int


@dataclass
class ClusterReport:
    labels: np.ndarray
    clusters: list
    majority_sign: int = 1
    P_tot: float | None = None
    h_eff: float | None = None
    S: float | None = None
    eta: float | None = None
    phase: str | None = None

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def minority(self) -> list:
        return [c for c in self.clusters if c.sign != self.majority_sign]


def _centroid(pos: np.ndarray, shape, periodic: bool) -> tuple:
    if not periodic:
        return tuple(float(c) for c in pos.mean(axis=0))
    out = []
    for k, L in enumerate(shape):
        ang = 2 * np.pi * pos[:, k] / L
        z = np.exp(1j * ang).mean()
        if abs(z) < 1e-12:
            out.append(float(pos[:, k].mean()))
        else:
            out.append(float((np.angle(z) * L / (2 * np.pi)) % L))
    return tuple(out)


def detect_clusters(state, geometry: Geometry) -> ClusterReport:
    """Maximal connected same-state groups over the geometry's neighbor relation.

    Cluster ids follow the smallest member index, so the labeling is
    reproducible and independent of scheduling.
    """
    state = np.ascontiguousarray(np.asarray(state).ravel(), dtype=np.int8)
    if state.shape != (geometry.n_agents,):
        raise ValueError("state and geometry disagree on agent count")
    labels = np.asarray(kernels().label_components(geometry.indptr, geometry.indices, state))
    n_lab = int(labels.max()) + 1 if labels.size else 0
    sizes = np.bincount(labels, minlength=n_lab)
    rows = np.repeat(np.arange(geometry.n_agents), geometry.degree())
    cut = labels[rows] != labels[geometry.indices]
    boundary = np.bincount(labels[rows[cut]], minlength=n_lab)
    first = np.full(n_lab, -1)
    first[labels[::-1]] = np.arange(len(labels))[::-1]
    periodic = geometry.boundary == "periodic"
    clusters = []
    for c in range(n_lab):
        members = np.flatnonzero(labels == c) if geometry.spatial else None
        cen = _centroid(geometry.positions[members], geometry.shape, periodic) if geometry.spatial else ()
        clusters.append(Cluster(c, int(state[first[c]]), int(sizes[c]), cen, int(boundary[c])))
    major = 1 if np.sum(state, dtype=np.int64) >= 0 else -1
    return ClusterReport(labels=labels, clusters=clusters, majority_sign=major)


def _min_image(delta: np.ndarray, shape, periodic: bool) -> np.ndarray:
    if not periodic:
        return delta
    L = np.asarray(shape, dtype=float)
    return delta - L * np.round(delta / L)


def mean_separation(clusters: list, geometry: Geometry) -> float:
    """Mean nearest-centroid distance; the domain diameter below two clusters."""
    if len(clusters) < 2 or not geometry.spatial:
        return geometry.diameter()
    cen = np.array([c.centroid for c in clusters], dtype=float)
    diff = _min_image(cen[:, None, :] - cen[None, :, :], geometry.shape, geometry.boundary == "periodic")
    d = np.sqrt(np.sum(diff**2, axis=-1))
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).mean())


def order_parameter(S: float, h_eff: float, dense_max: float = DENSE_MAX, middle_max: float = MIDDLE_MAX):
    """``eta = S / (2 h_eff)`` and its phase label."""
    if not h_eff > 0:
        raise ValueError("h_eff must be > 0")
    eta = S / (2.0 * h_eff)
    if eta <= dense_max:
        phase = "dense"
    elif eta <= middle_max:
        phase = "middle"
    else:
        phase = "sparse"
    return eta, phase


def collapse_time(R0: float, f_at_R0: float) -> float:
    """Lifetime ``R0^2 / (2 f(R0))`` of a shrinking minority cluster."""
    if R0 < 0:
        raise ValueError("R0 must be >= 0")
    if not f_at_R0 > 0:
        raise ValueError("f(R0) must be > 0")
    return R0 * R0 / (2.0 * f_at_R0)


def minority_lifetime(grid: FieldGrid, dt: float, t_end: float, sign: int = -1) -> float:
    """Time at which the last ``sign`` cell of ``grid.v`` disappears, or ``inf``."""
    seen = {"t": math.inf}

    def watch(t, g):
        if seen["t"] == math.inf and not np.any(np.sign(g.v) == sign):
            seen["t"] = t
            raise _Done

    try:
        evolve(grid, t_end, dt, record_every=1, tol=0.0, observers=(watch,), stop_on_converge=False)
    except _Done:
        pass
    return seen["t"]


class _Done(Exception):
    pass


def decay_width(v, x, x0: float, fraction: float = math.exp(-1.0)) -> float:
    """Distance below ``x0`` at which a 1-D profile falls to ``fraction * v(x0)``."""
    v = np.asarray(v, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    ref = float(np.interp(x0, x, v))
    if not ref > 0:
        raise ValueError("profile must be positive at the crossing point")
    target = fraction * ref
    below = np.flatnonzero((x < x0) & (v <= target))
    if below.size == 0:
        raise ValueError("profile never decays to the target level inside the domain")
    j = below.max()
    # linear interpolation between x[j] (below target) and x[j+1]
    xa, xb, va, vb = x[j], x[j + 1], v[j], v[j + 1]
    xs = xa + (target - va) * (xb - xa) / (vb - va)
    return float(x0 - xs)


@dataclass(frozen=True)
class Plateau:
    start: int
    stop: int
    level: float

    @property
    def length(self) -> int:
        return self.stop - self.start


def staircase(series, min_length: int = 10, window: int = 5, tol: float = 0.0) -> list:
    """Change-point scan for plateau-and-drop structure.

    A running median of odd ``window`` removes transient blips, maximal runs
    of constant level (within ``tol``) at least ``min_length`` long become
    plateaus, and neighbouring plateaus at the same level are merged.  The
    result is ordered in time; drops are the level changes between entries.

    Parameters
    ----------
    series : array_like
        1-D time series, e.g. the minority fraction per step.
    min_length : int
        Shortest run counted as a plateau.
    window : int
        Median filter width; 1 disables smoothing.
    tol : float
        Largest deviation from the run's first value still on the plateau.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be 1-D")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if x.size == 0:
        return []
    if window > 1:
        x = ndimage.median_filter(x, size=window, mode="nearest")
    runs = []
    start = 0
    for t in range(1, x.size + 1):
        if t == x.size or abs(x[t] - x[start]) > tol:
            if t - start >= min_length:
                runs.append(Plateau(start, t, float(x[start])))
            start = t
    merged = []
    for r in runs:
        if merged and abs(r.level - merged[-1].level) <= tol:
            merged[-1] = Plateau(merged[-1].start, r.stop, merged[-1].level)
        else:
            merged.append(r)
    return merged


@dataclass
class EnsembleStats:
    P_tot: float
    h_eff: float
    S: float
    eta: float
    phase: str
    no_clusters: bool = False
    h_eff_realization: float = math.nan
    h_eff_cluster: float = math.nan
    n_crossings: int = 0
    reports: list = field(default_factory=list)


def ensemble_stats(
    f_realizations,
    alpha: float,
    converged_states,
    dx: float = 1.0,
    boundary: str = "periodic",
    dense_max: float = DENSE_MAX,
    middle_max: float = MIDDLE_MAX,
) -> EnsembleStats:
    """Disorder-averaged cluster statistics.

    ``P_tot`` is the mean fraction of cells with ``f > 1``; ``h_eff`` pools
    layer thicknesses over every transversal crossing of every realization
    (per-realization and per-cluster means are reported alongside); ``S`` is
    the mean separation of minority clusters in the converged states.
    """
    fs = [np.asarray(f, dtype=np.float64) for f in f_realizations]
    if not fs:
        raise ValueError("need at least one realization")
    states = list(converged_states) if converged_states is not None else [None] * len(fs)
    if len(states) != len(fs):
        raise ValueError("one converged state per realization is required")
    ptot = float(np.mean([np.mean(f > 1.0) for f in fs]))
    periodic = boundary == "periodic"
    pooled, per_real, per_cluster, seps, reports = [], [], [], [], []
    for f, v in zip(fs, states):
        _, slopes, inside = find_crossings(f, dx, periodic)
        keep = slopes > 1e-12
        # f(x0) = 1 on every crossing
        ell = (alpha / slopes[keep]) ** (1.0 / 3.0) if alpha > 0 else np.zeros(0)
        pooled.extend(ell.tolist())
        if ell.size:
            per_real.append(float(ell.mean()))
        if v is None:
            continue
        geom = grid_geometry(f.shape, boundary)
        state = field_to_state(v) if np.asarray(v).dtype.kind == "f" else np.asarray(v).ravel()
        rep = detect_clusters(state, geom)
        reports.append(rep)
        seps.append(mean_separation(rep.minority(), geom))
        if ell.size:
            lab = rep.labels[inside[keep]]
            for c in np.unique(lab):
                per_cluster.append(float(ell[lab == c].mean()))
    no_clusters = ptot == 0.0 or not pooled
    S = float(np.mean(seps)) if seps else math.nan
    if no_clusters:
        return EnsembleStats(ptot, math.nan, S, math.nan, "none", True, reports=reports)
    h_eff = float(np.mean(pooled))
    eta, phase = order_parameter(S, h_eff, dense_max, middle_max) if seps else (math.nan, "none")
    return EnsembleStats(
        ptot, h_eff, S, eta, phase, False,
        h_eff_realization=float(np.mean(per_real)),
        h_eff_cluster=float(np.mean(per_cluster)) if per_cluster else math.nan,
        n_crossings=len(pooled),
        reports=reports,
    )
