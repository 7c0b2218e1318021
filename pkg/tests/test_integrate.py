import numpy as np
import pytest

from adaptint.dynamics import NoiseModel
from adaptint.integrate import (
    PredictionError,
    PredictionRecord,
    PredictionSet,
    consensus,
    consensus_pde,
    embed,
    ingest,
    readback,
)
from adaptint.lattice import euclidean_lattice, fully_connected


def _write(tmp_path, text, name="preds.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_basic(tmp_path):
    p = _write(tmp_path, "agent_id,prediction,quality\n3,yes,0.9\n1,-1,0.5\n\n2,1,1.0\n")
    ps = ingest(p)
    assert len(ps) == 3 and not ps.has_positions
    assert [r.prediction for r in ps.records] == [1, -1, 1]


def test_ingest_positions(tmp_path):
    p = _write(tmp_path, "agent_id,prediction,quality,x,y\na,1,0.5,0,1\nb,no,0.7,1,1\n")
    ps = ingest(p)
    assert ps.has_positions and ps.records[1].position == (1, 1)


@pytest.mark.parametrize("body,match", [
    ("agent_id,prediction,quality\na,1,0.5\na,-1,0.4\n", "duplicate agent_id 'a'"),
    ("agent_id,prediction,quality\na,1,1.5\n", "row 2: quality 1.5 outside"),
    ("agent_id,prediction,quality\na,1,0\n", "row 2: quality 0 outside"),
    ("agent_id,prediction,quality\na,1,nan\n", "outside"),
    ("agent_id,prediction,quality\na,maybe,0.5\n", "row 2"),
    ("agent_id,prediction,quality\na,1\n", "expected 3 fields"),
    ("agent_id,prediction,quality\n,1,0.5\n", "empty agent_id"),
    ("id,pred,q\na,1,0.5\n", "header"),
    ("agent_id,prediction,quality\n", "no prediction rows"),
    ("", "empty file"),
])
def test_ingest_errors(tmp_path, body, match):
    with pytest.raises(PredictionError, match=match):
        ingest(_write(tmp_path, body))


def test_prediction_set_validation():
    with pytest.raises(PredictionError):
        PredictionSet((PredictionRecord("a", 1, 0.5), PredictionRecord("a", 1, 0.5)))
    with pytest.raises(PredictionError):
        PredictionSet((PredictionRecord("a", 0, 0.5),))
    ps = PredictionSet((PredictionRecord("a", 1, 0.5),))
    assert ps.flipped().records[0].prediction == -1


def _preds(n, seed=0, positions=None):
    rng = np.random.default_rng(seed)
    recs = []
    for k in range(n):
        pos = positions[k] if positions is not None else None
        recs.append(PredictionRecord(str(k), int(rng.choice([-1, 1])), float(rng.uniform(0.1, 1.0)), pos))
    return PredictionSet(tuple(recs))


@pytest.mark.parametrize("mapping", ["identity", "square"])
def test_embed_readback_round_trip(mapping):
    ps = _preds(16, seed=1)
    system = embed(ps, fully_connected(16), mapping)
    back = readback(system, mapping)
    assert [r.agent_id for r in back.records] == [r.agent_id for r in ps.records]
    for a, b in zip(ps.records, back.records):
        assert a.prediction == b.prediction
        assert b.quality == pytest.approx(a.quality, rel=1e-14)
    assert np.array_equal(system.strengths.p, system.strengths.s)


def test_embed_numeric_id_order():
    ps = PredictionSet(tuple(PredictionRecord(i, 1, 0.5) for i in ("10", "2", "1")))
    system = embed(ps, fully_connected(3))
    assert system.agent_ids == ("1", "2", "10")


def test_embed_positions_and_round_trip():
    positions = [(x, y) for x in range(3) for y in range(3)][::-1]
    ps = _preds(9, seed=2, positions=positions)
    system = embed(ps, euclidean_lattice((3, 3), 1.1, boundary="open"))
    for r in ps.records:
        site = system.agent_ids.index(r.agent_id)
        assert tuple(system.geometry.positions[site]) == r.position
        assert system.sigma[site] == r.prediction
    back = readback(system, positions=True)
    assert {r.agent_id: r.position for r in back.records} == {r.agent_id: r.position for r in ps.records}


def test_embed_sub_geometry():
    ps = _preds(5, seed=3)
    system = embed(ps, euclidean_lattice((3, 3), 1.1))
    assert system.n_agents == 5 and system.geometry.params["induced"]


def test_embed_errors():
    with pytest.raises(ValueError, match="do not fit"):
        embed(_preds(5), fully_connected(4))
    with pytest.raises(ValueError, match="not spatial"):
        embed(_preds(2, positions=[(0, 0), (0, 1)]), fully_connected(2))
    with pytest.raises(ValueError, match="outside lattice"):
        embed(_preds(2, positions=[(0, 0), (5, 1)]), euclidean_lattice((3, 3), 1.1))
    with pytest.raises(ValueError, match="already occupied"):
        embed(_preds(2, positions=[(0, 0), (0, 0)]), euclidean_lattice((3, 3), 1.1))
    with pytest.raises(ValueError, match="unknown quality mapping"):
        embed(_preds(2), fully_connected(2), mapping="logistic")


def test_consensus_unanimous():
    ps = PredictionSet(tuple(PredictionRecord(str(k), 1, 0.8) for k in range(9)))
    r = consensus(embed(ps, euclidean_lattice((3, 3), 1.1, boundary="open")))
    assert r.decision == "yes" and r.p_yes == 1.0 and r.p_no == 0.0
    assert r.converged and r.stop == "fixed_point" and r.minority == []


def test_consensus_tie_two_cycle():
    ps = PredictionSet((PredictionRecord("a", 1, 0.5), PredictionRecord("b", -1, 0.5)))
    r = consensus(embed(ps, fully_connected(2)))
    assert r.stop == "two_cycle" and r.decision == "tie"
    assert r.p_yes == r.p_no == 0.5


def test_consensus_keeps_minority_cluster():
    recs = []
    for x in range(6):
        for y in range(6):
            inside = x < 2 and y < 2
            recs.append(PredictionRecord(f"{x}{y}", -1 if inside else 1, 1.0 if inside else 0.5, (x, y)))
    r = consensus(embed(PredictionSet(tuple(recs)), euclidean_lattice((6, 6), 1.5), beta=2.0))
    assert r.decision == "yes"
    assert [c.size for c in r.minority] == [4]
    assert r.p_no == pytest.approx(4 / 36)


def test_consensus_max_steps_with_noise():
    ps = _preds(25, seed=5)
    r = consensus(embed(ps, euclidean_lattice((5, 5), 1.5)), NoiseModel("site", "gaussian", 5.0, 1), max_steps=7)
    assert not r.converged and r.stop == "max_steps" and r.steps_to_stationarity == 7
    assert r.p_yes + r.p_no == 1.0
    with pytest.raises(ValueError):
        consensus(embed(ps, euclidean_lattice((5, 5), 1.5)), max_steps=0)


def test_consensus_pde():
    positions = [(x, y) for x in range(8) for y in range(8)]
    recs = [PredictionRecord(str(k), 1 if k % 7 else -1, 0.9, p) for k, p in enumerate(positions)]
    system = embed(PredictionSet(tuple(recs)), euclidean_lattice((8, 8), 1.1))
    r = consensus_pde(system, alpha=0.2, t_end=200.0)
    assert r.decision == "yes" and r.p_yes + r.p_no == 1.0
    with pytest.raises(ValueError, match="every lattice site"):
        consensus_pde(embed(_preds(5), euclidean_lattice((3, 3), 1.1)))
