"""Synchronous automaton dynamics, the mean-field rule and trajectories.

Update rule for agent ``i``::

    sigma_i(t+1) = -sign(sigma_i * I_i + h_i)

with a zero argument keeping the current state.  All agents read the frozen
time-``t`` configuration, so the row range can be split across threads.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from adaptint._backend import kernels
from adaptint.lattice import Geometry, StrengthField

__all__ = [
    "AgentSystem",
    "NoiseModel",
    "Trajectory",
    "impact",
    "impacts",
    "step_sync",
    "mean_field_locals",
    "mean_field_step",
    "run",
    "magnetization",
    "make_initial",
]


@dataclass(frozen=True, eq=False)
class AgentSystem:
    """Binary states on a geometry with per-agent strengths."""

    sigma: np.ndarray
    geometry: Geometry
    strengths: StrengthField
    t: int = 0
    agent_ids: tuple | None = None

    def __post_init__(self):
        sigma = np.ascontiguousarray(self.sigma, dtype=np.int8)
        if sigma.shape != (self.geometry.n_agents,):
            raise ValueError(f"state has shape {sigma.shape}, geometry has {self.geometry.n_agents} agents")
        if len(self.strengths) != self.geometry.n_agents:
            raise ValueError("strength field and geometry disagree on agent count")
        if not np.all(np.abs(sigma) == 1):
            raise ValueError("states must be +1 or -1")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_agents(self) -> int:
        return self.geometry.n_agents

    def with_state(self, sigma, t=None) -> "AgentSystem":
        return dataclasses.replace(self, sigma=sigma, t=self.t if t is None else t)


@dataclass(frozen=True)
class NoiseModel:
    """White noise added to the update argument.

    ``kind='site'`` draws independent ``h_i`` per agent and step,
    ``kind='global'`` one shared ``h`` per step.  Draws for step ``t`` come
    from a generator seeded with ``(seed, t)`` and are laid out by agent
    index, so they do not depend on how the update is scheduled.
    ``mirror=True`` negates every draw, which pairs a run with its
    flipped-state twin.
    """

    kind: str = "none"
    dist: str = "gaussian"
    amplitude: float = 0.0
    seed: int = 0
    mirror: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "site", "global"):
            raise ValueError(f"noise kind must be none|site|global, got {self.kind!r}")
        if self.dist not in ("gaussian", "uniform"):
            raise ValueError(f"noise dist must be gaussian|uniform, got {self.dist!r}")
        if self.amplitude < 0:
            raise ValueError("noise amplitude must be >= 0")

    @property
    def silent(self) -> bool:
        return self.kind == "none" or self.amplitude == 0.0

    def draw(self, t: int, n: int) -> np.ndarray | None:
        if self.silent:
            return None
        rng = np.random.default_rng([int(self.seed), int(t)])
        size = n if self.kind == "site" else 1
        if self.dist == "gaussian":
            h = rng.normal(0.0, self.amplitude, size)
        else:
            h = rng.uniform(-self.amplitude, self.amplitude, size)
        if self.kind == "global":
            h = np.full(n, h[0])
        return -h if self.mirror else h


NO_NOISE = NoiseModel()


@dataclass
class Trajectory:
    """Magnetization series, flip counts and scheduled snapshots.

    ``m[k]`` and ``flips[k]`` refer to time ``k``; ``flips[0]`` is 0.
    ``stop`` is ``max_steps``, ``fixed_point`` or ``two_cycle``.
    """

    m: list = field(default_factory=list)
    flips: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    stop: str = "max_steps"
    final: AgentSystem | None = None
    previous: AgentSystem | None = None

    @property
    def steps(self) -> int:
        return len(self.m) - 1


@lru_cache(maxsize=8)
def _pool(threads: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=threads, thread_name_prefix="adaptint")


def _split(n: int, threads: int):
    bounds = np.linspace(0, n, max(1, min(threads, n)) + 1).astype(int)
    return list(zip(bounds[:-1], bounds[1:]))


def _run_rows(fn, n: int, threads: int) -> int:
    """Apply ``fn(start, stop)`` over row chunks; returns summed result."""
    if threads <= 1 or n < 2:
        return fn(0, n)
    return sum(_pool(threads).map(lambda se: fn(*se), _split(n, threads)))


def impacts(system: AgentSystem) -> np.ndarray:
    g, st = system.geometry, system.strengths
    return np.asarray(kernels().impact(g.indptr, g.indices, g.weights, st.p, st.s, system.sigma, st.beta, st.norm))


def impact(system: AgentSystem, i: int) -> float:
    """Rescaled impact on agent ``i`` including its self-support term."""
    if not 0 <= i < system.n_agents:
        raise IndexError(f"agent index {i} out of range")
    g, st = system.geometry, system.strengths
    val = kernels().impact(g.indptr, g.indices, g.weights, st.p, st.s, system.sigma, st.beta, st.norm, i, i + 1)
    return float(val[0])


def step_sync(system: AgentSystem, noise: NoiseModel = NO_NOISE, threads: int = 1) -> tuple[AgentSystem, int]:
    """One synchronous update; returns the new system and the flip count."""
    g, st = system.geometry, system.strengths
    h = noise.draw(system.t, system.n_agents)
    out = np.empty(system.n_agents, dtype=np.int8)
    k = kernels()

    def rows(start, stop):
        return k.sync_step(g.indptr, g.indices, g.weights, st.p, st.s, system.sigma, h,
                           st.beta, st.norm, out, start, stop)

    flips = _run_rows(rows, system.n_agents, threads)
    return system.with_state(out, system.t + 1), int(flips)


def self_support(strengths: StrengthField) -> np.ndarray:
    """Per-agent effective self-supportiveness ``a_i``."""
    st = strengths
    return (st.s.mean() - st.p.mean()) / st.norm + st.beta * st.s / st.norm


def mean_field_locals(system: AgentSystem, i: int) -> tuple[float, float]:
    """Weighted majority-minority difference ``m_i`` and self-support ``a_i``."""
    if not 0 <= i < system.n_agents:
        raise IndexError(f"agent index {i} out of range")
    g, st = system.geometry, system.strengths
    lo, hi = g.indptr[i], g.indptr[i + 1]
    j = g.indices[lo:hi]
    m = float(np.sum(g.weights[lo:hi] * ((st.s[j] + st.p[j]) * system.sigma[j])) / st.norm)
    return m, float(self_support(st)[i])


def mean_field_step(system: AgentSystem, threads: int = 1) -> tuple[AgentSystem, int]:
    """Noise-free mean-field update; ``|m_i| == |a_i|`` keeps the state."""
    g, st = system.geometry, system.strengths
    a = np.ascontiguousarray(self_support(st))
    out = np.empty(system.n_agents, dtype=np.int8)
    k = kernels()

    def rows(start, stop):
        return k.mean_field_step(g.indptr, g.indices, g.weights, st.p, st.s, system.sigma, a,
                                 st.norm, out, start, stop)

    flips = _run_rows(rows, system.n_agents, threads)
    return system.with_state(out, system.t + 1), int(flips)


def magnetization(system_or_sigma) -> float:
    sigma = getattr(system_or_sigma, "sigma", system_or_sigma)
    sigma = np.asarray(sigma)
    if sigma.size == 0:
        raise ValueError("magnetization of an empty system")
    return float(np.sum(sigma, dtype=np.int64)) / sigma.size


def run(
    system: AgentSystem,
    noise: NoiseModel = NO_NOISE,
    steps: int = 100,
    snapshot_every: int = 0,
    rule: str = "sync",
    stop_on_cycle: bool = True,
    threads: int = 1,
) -> Trajectory:
    """Iterate the dynamics for up to ``steps`` updates.

    With silent noise the run stops at a fixed point or a 2-cycle when
    ``stop_on_cycle`` is set.  Snapshots are taken at ``t = 0`` and every
    ``snapshot_every`` steps (``0`` disables them).
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if rule not in ("sync", "mean_field"):
        raise ValueError(f"rule must be sync|mean_field, got {rule!r}")
    traj = Trajectory(m=[magnetization(system)], flips=[0])
    if snapshot_every > 0:
        traj.snapshots[system.t] = system.sigma.copy()
    detect = stop_on_cycle and (noise.silent or rule == "mean_field")
    older, cur = None, system
    for _ in range(steps):
        if rule == "sync":
            nxt, flips = step_sync(cur, noise, threads)
        else:
            nxt, flips = mean_field_step(cur, threads)
        traj.m.append(magnetization(nxt))
        traj.flips.append(flips)
        if snapshot_every > 0 and (nxt.t - system.t) % snapshot_every == 0:
            traj.snapshots[nxt.t] = nxt.sigma.copy()
        older, cur = cur, nxt
        if not detect:
            continue
        if flips == 0:
            traj.stop = "fixed_point"
            break
        if traj.previous is not None and np.array_equal(cur.sigma, traj.previous.sigma):
            traj.stop = "two_cycle"
            break
        traj.previous = older
    traj.final = cur
    traj.previous = older
    return traj


def make_initial(
    geometry: Geometry,
    kind: str = "critical",
    *,
    sign: int = 1,
    m0: float = 0.0,
    layout: str = "random",
    seed: int = 0,
) -> np.ndarray:
    """Initial states for the three magnetization classes.

    ``uniform`` puts every agent at ``sign``; ``mixed`` realizes mean ``m0``
    either i.i.d. (``layout='random'``) or as one compact minority block
    (``layout='clustered'``, lattices only); ``critical`` is i.i.d. with
    mean 0.
    """
    n = geometry.n_agents
    if kind == "uniform":
        if sign not in (1, -1):
            raise ValueError("uniform sign must be +1 or -1")
        return np.full(n, sign, dtype=np.int8)
    if kind == "critical":
        kind, m0, layout = "mixed", 0.0, "random"
    if kind != "mixed":
        raise ValueError(f"initial class must be uniform|mixed|critical, got {kind!r}")
    if not -1.0 <= m0 <= 1.0:
        raise ValueError(f"m0 must lie in [-1, 1], got {m0}")
    if layout == "random":
        rng = np.random.default_rng(seed)
        return np.where(rng.random(n) < (1.0 + m0) / 2.0, 1, -1).astype(np.int8)
    if layout != "clustered":
        raise ValueError(f"layout must be random|clustered, got {layout!r}")
    if not geometry.spatial:
        raise ValueError("clustered layout needs a spatial geometry")
    major = 1 if m0 >= 0 else -1
    k = int(round(n * (1.0 - abs(m0)) / 2.0))
    center = (np.asarray(geometry.shape, dtype=float) - 1.0) / 2.0
    d2 = np.sum((geometry.positions - center) ** 2, axis=1)
    minority = np.argsort(d2, kind="stable")[:k]
    sigma = np.full(n, major, dtype=np.int8)
    sigma[minority] = -major
    return sigma
