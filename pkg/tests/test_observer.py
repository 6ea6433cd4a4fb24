import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from einsel import observer as ob
from einsel import povm as pv
from einsel.errors import NumericError, ParseError, ValidationError
from einsel.hamiltonian import build

from oracles import expm_taylor, random_state

RULE = pv.DominanceRule(0.01)


def hand_simulation(psi0, h_dense, times, effects, labels, eps, seed, mode="witness"):
    """Reference step-through: Taylor propagator, explicit quadratic forms."""
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    psi = np.array(psi0, dtype=complex)
    last = times[0]
    for t in times:
        if mode == "witness":
            state = expm_taylor(-1j * h_dense * t) @ psi0
        else:
            state = expm_taylor(-1j * h_dense * (t - last)) @ psi
        probs = np.array([max(0.0, float(np.real(np.conj(state) @ e @ state))) for e in effects])
        u = rng.random()
        above = [k for k, p in enumerate(probs) if p > eps]
        label = None
        if len(above) == 1:
            k = above[0]
            cdf = np.cumsum(probs)
            drawn = min(int(np.sum(cdf <= u * cdf[-1])), len(probs) - 1)
            if drawn == k:
                label = labels[k]
            if mode == "projective":
                w, v = np.linalg.eigh(effects[drawn])
                root = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
                state = root @ state
                state /= np.linalg.norm(state)
        psi, last = state, t
        out.append(label)
    return out


def test_schedule_validation():
    assert np.allclose(ob.ObservationSchedule(1.0, 0.5, 3).times(), [1.0, 1.5, 2.0])
    with pytest.raises(ValidationError):
        ob.ObservationSchedule(0.0, 0.0, 3)
    with pytest.raises(ValidationError):
        ob.ObservationSchedule(0.0, 1.0, 0)
    with pytest.raises(ValidationError):
        ob.ObservationSchedule(math.nan, 1.0, 1)


def test_stationary_records():
    tr = ob.run_trajectory([1, 0], build(1, []), ob.ObservationSchedule(0, 1, 5), pv.computational(1), RULE)
    assert tr.outcomes == ["0"] * 5


def test_rabi_half_period_alternates():
    h = build(1, ["1.0 * X0"])
    tr = ob.run_trajectory([1, 0], h, ob.ObservationSchedule(math.pi / 2, math.pi / 2, 6), pv.computational(1), RULE, seed=3)
    assert tr.outcomes == ["1", "0", "1", "0", "1", "0"]


def test_rabi_quarter_period_gaps():
    h = build(1, ["1.0 * X0"])
    tr = ob.run_trajectory([1, 0], h, ob.ObservationSchedule(0.0, math.pi / 4, 5), pv.computational(1), RULE)
    assert tr.outcomes[1] is None and tr.outcomes[3] is None
    assert tr.outcomes[0] == "0" and tr.outcomes[2] == "1" and tr.outcomes[4] == "0"
    assert tr.records[1].p_max == pytest.approx(0.5)


@pytest.mark.parametrize("mode", ["witness", "projective"])
@pytest.mark.parametrize("seed", [0, 7, 2024])
def test_three_entity_matches_hand_simulation(mode, seed):
    h = build(3, ["1.0 * Z0 Z1", "0.7 * X0", "0.45 * X1", "0.3 * X2"])
    p = pv.computational(3, on=[0])
    psi0 = np.zeros(8, dtype=complex)
    psi0[0] = 1.0
    sched = ob.ObservationSchedule(0.0, 0.37, 300)
    rule = pv.DominanceRule(0.3, mode)
    tr = ob.run_trajectory(psi0, h, sched, p, rule, seed)
    ref = hand_simulation(psi0, h.to_dense(), sched.times(), p.effects, p.labels, 0.3, seed, mode)
    assert tr.outcomes == ref
    assert tr.none_count > 0 and tr.none_count < len(tr)


def test_same_seed_same_trace_different_seed_differs():
    h = build(2, ["1.0 * Z0 Z1", "0.8 * X0"])
    args = ([1, 0, 0, 0], h, ob.ObservationSchedule(0, 0.3, 200), pv.computational(2, on=[0]), pv.DominanceRule(0.3))
    a = ob.run_trajectory(*args, seed=5)
    b = ob.run_trajectory(*args, seed=5)
    c = ob.run_trajectory(*args, seed=6)
    assert ob.format_trace(a) == ob.format_trace(b)
    assert a.outcomes != c.outcomes


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        ob.run_trajectory([1, 0, 0, 0], build(2, []), ob.ObservationSchedule(), pv.computational(1), RULE)
    with pytest.raises(ValidationError):
        ob.run_trajectory([1, 0], build(2, []), ob.ObservationSchedule(), pv.computational(1), RULE)


@given(st.integers(0, 2**32 - 1), st.floats(0.02, 0.45))
def test_records_never_violate_dominance(seed, eps):
    rng = np.random.default_rng(seed)
    h = build(2, [(rng.normal(), [(0, "Z"), (1, "Z")]), (rng.normal(), [(0, "X")]), (rng.normal(), [(1, "Y")])])
    tr = ob.run_trajectory(random_state(rng, 4), h, ob.ObservationSchedule(0, 0.21, 50), pv.computational(2), pv.DominanceRule(eps), seed)
    assert ob.recheck_dominance(tr) == []


def test_recheck_flags_bad_record():
    bad = ob.RecordTrace((ob.Record(0.0, "0", 0.7, (0.7, 0.3)),), epsilon=0.01, labels=("0", "1"))
    assert ob.recheck_dominance(bad) == [0]


def test_einselected_state():
    p = pv.computational(1)
    out, fid = ob.einselected_state(p, 0, [1, 0])
    assert fid == pytest.approx(1.0)
    psi = np.array([math.sqrt(0.995), math.sqrt(0.005)])
    out, fid = ob.einselected_state(p, 0, psi)
    assert fid == pytest.approx(0.995)
    assert np.allclose(np.asarray(out), [1, 0])
    with pytest.raises(NumericError):
        ob.einselected_state(p, 1, [1, 0])


def test_einselected_state_trine_oracle():
    vecs = [np.array([math.cos(a), math.sin(a)]) for a in (0, 2 * math.pi / 3, 4 * math.pi / 3)]
    t = pv.validate([2 / 3 * np.outer(v, v) for v in vecs])
    psi = np.array([0.99, math.sqrt(1 - 0.99**2)])
    out, fid = ob.einselected_state(t, 0, psi)
    # sqrt(2/3 |v><v|) = sqrt(2/3) |v><v|, so the output is |v0> itself
    assert np.allclose(np.asarray(out), vecs[0])
    assert fid == pytest.approx(abs(vecs[0] @ psi) ** 2)


def test_trace_round_trip():
    h = build(1, ["0.9 * X0"])
    tr = ob.run_trajectory([1, 0], h, ob.ObservationSchedule(0.1, 0.3, 40), pv.computational(1), pv.DominanceRule(0.2), 4, scenario_id="demo")
    text = ob.format_trace(tr)
    assert text.splitlines()[0] == "# scenario=demo seed=4 epsilon=0.2 mode=witness"
    back = ob.parse_trace(text)
    assert back.outcomes == tr.outcomes
    assert [r.time for r in back.records] == [r.time for r in tr.records]
    assert [r.p_max for r in back.records] == [r.p_max for r in tr.records]
    assert ob.format_trace(back) == text


@pytest.mark.parametrize(
    "text",
    ["t,outcome,p_max\n0,0,1\n", "# scenario=a seed=1 epsilon=0.1\n", "# scenario=a seed=1 epsilon=0.1 mode=witness\n0,0\n",
     "# scenario=a seed=1 epsilon=0.1 mode=witness\nx,0,1\n"],
)
def test_parse_trace_errors(text):
    with pytest.raises(ParseError):
        ob.parse_trace(text)


def test_trace_times_must_increase():
    with pytest.raises(ValidationError):
        ob.RecordTrace((ob.Record(1.0, None, 0.5), ob.Record(1.0, None, 0.5)))
