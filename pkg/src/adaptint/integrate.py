"""Consensus over an ensemble of external binary predictions.

Predictions become agent states, prediction quality becomes agent strength
(``p_i = s_i``), the automaton relaxes to a stationary state, and the
decision is the majority of that state.  Minority clusters that survive
relaxation are reported alongside the decision.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from adaptint import analysis
from adaptint.dynamics import NO_NOISE, AgentSystem, NoiseModel, run
from adaptint.field import FieldGrid, evolve, stability_bound
from adaptint.lattice import Geometry, StrengthField, build_geometry

__all__ = [
    "PredictionRecord",
    "PredictionSet",
    "ConsensusResult",
    "PredictionError",
    "MAPPINGS",
    "ingest",
    "embed",
    "readback",
    "consensus",
    "consensus_pde",
]

_YES = {"1", "+1", "yes", "YES", "Yes"}
_NO = {"-1", "no", "NO", "No"}


class PredictionError(ValueError):
    """Malformed prediction input."""


@dataclass(frozen=True)
class PredictionRecord:
    agent_id: str
    prediction: int
    quality: float
    position: tuple | None = None


@dataclass(frozen=True)
class PredictionSet:
    records: tuple

    def __post_init__(self):
        ids = [r.agent_id for r in self.records]
        seen = set()
        for i in ids:
            if i in seen:
                raise PredictionError(f"duplicate agent_id {i!r}")
            seen.add(i)
        for r in self.records:
            if r.prediction not in (-1, 1):
                raise PredictionError(f"agent {r.agent_id!r}: prediction must be +1 or -1")
            if not 0 < r.quality <= 1:
                raise PredictionError(f"agent {r.agent_id!r}: quality {r.quality} outside (0, 1]")

    def __len__(self):
        return len(self.records)

    @property
    def has_positions(self) -> bool:
        return any(r.position is not None for r in self.records)

    def flipped(self) -> "PredictionSet":
        return PredictionSet(tuple(
            PredictionRecord(r.agent_id, -r.prediction, r.quality, r.position) for r in self.records
        ))


def _parse_prediction(raw: str) -> int:
    raw = raw.strip()
    if raw in _YES:
        return 1
    if raw in _NO:
        return -1
    raise ValueError(f"prediction {raw!r} is not one of -1, 1, yes, no")


def ingest(path) -> PredictionSet:
    """Read ``agent_id,prediction,quality[,x,y[,z]]`` rows (header required)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PredictionError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:3] != ["agent_id", "prediction", "quality"] or header[3:] not in ([], ["x"], ["x", "y"], ["x", "y", "z"]):
            raise PredictionError(f"{path}: header must be agent_id,prediction,quality[,x,y[,z]], got {','.join(header)}")
        records, seen = [], {}
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise PredictionError(f"{path}: row {rowno}: expected {len(header)} fields, got {len(row)}")
            aid = row[0].strip()
            if not aid:
                raise PredictionError(f"{path}: row {rowno}: empty agent_id")
            if aid in seen:
                raise PredictionError(f"{path}: row {rowno}: duplicate agent_id {aid!r} (first at row {seen[aid]})")
            seen[aid] = rowno
            try:
                pred = _parse_prediction(row[1])
                qual = float(row[2])
                pos = tuple(int(c) for c in row[3:]) if len(row) > 3 else None
            except ValueError as exc:
                raise PredictionError(f"{path}: row {rowno}: {exc}") from None
            if not (math.isfinite(qual) and 0 < qual <= 1):
                raise PredictionError(f"{path}: row {rowno}: quality {row[2].strip()} outside (0, 1]")
            records.append(PredictionRecord(aid, pred, qual, pos))
    if not records:
        raise PredictionError(f"{path}: no prediction rows")
    return PredictionSet(tuple(records))


# quality -> strength hooks, each paired with its inverse
MAPPINGS = {
    "identity": (lambda q: q, lambda s: s),
    "square": (lambda q: q * q, np.sqrt),
}


def _id_key(aid: str):
    return (0, int(aid), "") if aid.lstrip("-").isdigit() else (1, 0, aid)


def embed(preds: PredictionSet, geometry: Geometry | dict, mapping: str = "identity", beta: float = 0.0) -> AgentSystem:
    """Map predictions onto agents of ``geometry``.

    Records with positions land on the matching lattice site; the others fill
    sites in agent-id order.  When the geometry has more sites than records,
    the system lives on the sub-geometry induced by the occupied sites.
    """
    if isinstance(geometry, dict):
        geometry = build_geometry(geometry)
    if mapping not in MAPPINGS:
        raise ValueError(f"unknown quality mapping {mapping!r}; have {sorted(MAPPINGS)}")
    n = geometry.n_agents
    if len(preds) > n:
        raise ValueError(f"{len(preds)} predictions do not fit a geometry of {n} agents")
    records = sorted(preds.records, key=lambda r: _id_key(r.agent_id))
    sites = np.full(len(records), -1, dtype=np.int64)
    taken = np.zeros(n, dtype=bool)
    if preds.has_positions:
        if not geometry.spatial:
            raise ValueError("predictions carry positions but the geometry is not spatial")
        dims = np.asarray(geometry.shape)
        strides = np.array([int(np.prod(dims[k + 1:])) for k in range(len(dims))])
        for k, r in enumerate(records):
            if r.position is None:
                continue
            if len(r.position) != len(dims) or any(not 0 <= c < d for c, d in zip(r.position, dims)):
                raise ValueError(f"agent {r.agent_id!r}: position {r.position} outside lattice {tuple(dims)}")
            site = int(np.dot(r.position, strides))
            if taken[site]:
                raise ValueError(f"agent {r.agent_id!r}: site {r.position} already occupied")
            sites[k] = site
            taken[site] = True
    free = iter(np.flatnonzero(~taken))
    for k in range(len(records)):
        if sites[k] < 0:
            sites[k] = next(free)
    order = np.argsort(sites, kind="stable")
    records = [records[k] for k in order]
    if len(records) < n:
        geometry = geometry.subset(sites[order])
    fwd = MAPPINGS[mapping][0]
    q = np.array([r.quality for r in records])
    strength = np.asarray(fwd(q), dtype=np.float64)
    return AgentSystem(
        sigma=np.array([r.prediction for r in records], dtype=np.int8),
        geometry=geometry,
        strengths=StrengthField(p=strength, s=strength.copy(), beta=beta),
        agent_ids=tuple(r.agent_id for r in records),
    )


def readback(system: AgentSystem, mapping: str = "identity", positions: bool = False) -> PredictionSet:
    """Recover the prediction set an :func:`embed` call started from.

    Lattice coordinates are attached only when ``positions`` is set.
    """
    if system.agent_ids is None:
        raise ValueError("system carries no agent ids")
    inv = MAPPINGS[mapping][1]
    q = np.asarray(inv(system.strengths.p), dtype=np.float64)
    keep = positions and system.geometry.spatial
    pos = [tuple(int(c) for c in p) if keep else None for p in system.geometry.positions]
    recs = sorted(
        (PredictionRecord(a, int(s), float(qq), pp) for a, s, qq, pp in zip(system.agent_ids, system.sigma, q, pos)),
        key=lambda r: _id_key(r.agent_id),
    )
    return PredictionSet(tuple(recs))


@dataclass
class ConsensusResult:
    decision: str
    p_yes: float
    p_no: float
    m_final: float
    minority: list
    steps_to_stationarity: int
    stop: str
    converged: bool
    report: analysis.ClusterReport | None = None


def _probabilities(plus: int, minus: int) -> tuple[float, float]:
    # the larger class is rounded, the smaller one is its exact complement
    total = plus + minus
    if plus >= minus:
        p_yes = float(Fraction(plus, total))
        return p_yes, 1.0 - p_yes
    p_no = float(Fraction(minus, total))
    return 1.0 - p_no, p_no


def _result(states, steps, stop, converged, last_state, geometry) -> ConsensusResult:
    plus = sum(int(np.count_nonzero(s > 0)) for s in states)
    minus = sum(int(np.count_nonzero(s < 0)) for s in states)
    p_yes, p_no = _probabilities(plus, minus)
    m_final = (plus - minus) / (plus + minus)
    decision = "tie" if plus == minus else ("yes" if plus > minus else "no")
    rep = analysis.detect_clusters(last_state, geometry)
    if decision == "tie":
        # no majority: every cluster is equally a minority
        minority = list(rep.clusters) if rep.n_clusters > 1 else []
    else:
        maj = 1 if plus > minus else -1
        minority = [c for c in rep.clusters if c.sign != maj]
    return ConsensusResult(decision, p_yes, p_no, m_final, minority, steps, stop, converged, rep)


def consensus(system: AgentSystem, noise: NoiseModel = NO_NOISE, max_steps: int = 1000, threads: int = 1) -> ConsensusResult:
    """Relax with the automaton and read off the majority decision.

    A 2-cycle is resolved by pooling the two alternating states.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    traj = run(system, noise, max_steps, rule="sync", stop_on_cycle=True, threads=threads)
    final = traj.final
    states = [final.sigma]
    if traj.stop == "two_cycle":
        states.append(traj.previous.sigma)
    converged = traj.stop != "max_steps"
    steps = traj.steps if converged else max_steps
    return _result(states, steps, traj.stop, converged, final.sigma, system.geometry)


def consensus_pde(system: AgentSystem, gamma: float = 1.0, alpha: float = 0.1, f_scale: float = 2.0,
                  t_end: float = 50.0, tol: float = 1e-8) -> ConsensusResult:
    """Relax predictions embedded as a +-1 field with the continuum flow.

    Needs a full lattice geometry; the strength field is the agent strength
    relative to its mean, times ``f_scale``.
    """
    g = system.geometry
    if g.kind != "lattice" or g.params.get("induced"):
        raise ValueError("the field relaxation needs every lattice site occupied")
    st = system.strengths
    f = (f_scale * (st.p + st.s) / st.norm).reshape(g.shape)
    grid = FieldGrid(system.sigma.astype(float).reshape(g.shape), f, gamma, alpha, 1.0, g.boundary)
    dt = 0.5 * stability_bound(grid)
    res = evolve(grid, t_end, dt, record_every=10, tol=tol)
    state = analysis.field_to_state(res.grid.v)
    stop = "converged" if res.converged else "max_steps"
    return _result([state], res.steps, stop, res.converged, state, grid_lattice(g))


def grid_lattice(g: Geometry) -> Geometry:
    return analysis.grid_geometry(g.shape, g.boundary)
