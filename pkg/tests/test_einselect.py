import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from einsel import einselect as es
from einsel.errors import NumericError, ValidationError
from einsel.hamiltonian import build

from oracles import PAULI, dense_hamiltonian, mutual_information, split_projections


def random_two_local(rng, n, field=0.5, coupling=1.0):
    terms = []
    for k in range(n):
        for p in "XZ":
            terms.append((field * rng.normal(), [(k, p)]))
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < 0.6:
            for p, q in (("Z", "Z"), ("X", "X")):
                terms.append((coupling * rng.normal(), [(i, p), (j, q)]))
    return terms


def ring(n=6, j=1.0, h=0.05):
    terms = [(j, [(k, "Z"), ((k + 1) % n, "Z")]) for k in range(n)]
    terms += [(h, [(k, "X")]) for k in range(n)]
    return build(n, terms)


def test_conditions_examples():
    r = es.check_conditions(build(2, ["1.0 * Z0 Z1"]), [0], [1], 0.1)
    assert (r.ratio_s, r.ratio_f, r.satisfied) == (0.0, 0.0, True)
    r = es.check_conditions(build(2, ["1.0 * Z0 Z1", "5.0 * X0"]), [0], [1], 0.1)
    assert r.ratio_s == pytest.approx(5.0) and not r.satisfied


def test_conditions_zero_interaction_sentinel():
    r = es.check_conditions(build(2, ["1.0 * Z0", "1.0 * X1"]), [0], [1])
    assert math.isinf(r.ratio_s) and math.isinf(r.ratio_f) and not r.satisfied
    assert r.to_dict()["ratio_s"] is None


def test_conditions_argument_errors():
    h = build(3, ["1.0 * Z0 Z1"])
    with pytest.raises(ValidationError):
        es.check_conditions(h, [0], [0, 1])
    with pytest.raises(ValidationError):
        es.check_conditions(h, [0], [], 0.1)
    with pytest.raises(ValidationError):
        es.check_conditions(h, [0], [1], 1.5)


def test_conditions_match_dense_oracle_exhaustively(rng):
    n = 6
    terms = random_two_local(rng, n)
    h = build(n, terms)
    dense = dense_hamiltonian(n, terms)
    checked = 0
    for size in (1, 2):
        for s in itertools.combinations(range(n), size):
            rest = [k for k in range(n) if k not in s]
            frags = [rest, rest[:2], rest[-1:]]
            for f in frags:
                r = es.check_conditions(h, s, f, 0.5)
                ref = split_projections(dense, n, list(s), f)
                assert np.allclose((r.norm_s, r.norm_f, r.norm_int), ref, atol=1e-9)
                checked += 1
    assert checked == 63


@given(st.integers(0, 2**32 - 1), st.floats(1.0, 10.0))
def test_conditions_monotone_in_interaction_scale(seed, c):
    rng = np.random.default_rng(seed)
    n = 4
    h = build(n, random_two_local(rng, n, field=0.2))
    s, f = {0}, {1, 2}
    inter = h.restrict(s | f).select(lambda sup: bool(sup & s) and bool(sup & f))
    stronger = h + inter.scaled(c - 1.0)
    before = es.check_conditions(h, s, f, 0.3)
    after = es.check_conditions(stronger, s, f, 0.3)
    if before.satisfied:
        assert after.satisfied
    if before.norm_int > 0:
        assert after.ratio_s == pytest.approx(before.ratio_s / c, rel=1e-9, abs=1e-12)


def test_pointer_basis_zz_and_xz():
    pb = es.pointer_basis(build(2, ["0.7 * Z0 Z1"]), [0])
    assert pb.exact and np.allclose(pb.vectors, np.eye(2))
    pb = es.pointer_basis(build(2, ["0.7 * X0 Z1"]), [0])
    assert pb.exact
    assert np.allclose(pb.vectors, np.array([[1, 1], [1, -1]]) / math.sqrt(2))


def test_pointer_basis_zero_interaction():
    with pytest.raises(NumericError, match="no basis einselected"):
        es.pointer_basis(build(2, ["1.0 * Z0"]).select(lambda s: len(s) > 1), [0], [1])


def schmidt_oracle(n_s, n_f, terms):
    """System operators from the SVD of the Pauli-coefficient matrix."""
    letters = "IXYZ"
    n = n_s + n_f
    dense = dense_hamiltonian(n, terms)
    from oracles import pauli_string

    sys_strings = list(itertools.product(letters, repeat=n_s))
    frag_strings = list(itertools.product(letters, repeat=n_f))
    c = np.zeros((len(sys_strings), len(frag_strings)), dtype=complex)
    for a, p in enumerate(sys_strings):
        for b, q in enumerate(frag_strings):
            full = pauli_string(n, list(enumerate(p + q)))
            c[a, b] = np.trace(full @ dense) / (1 << n)
    u, sv, _ = np.linalg.svd(c)
    ops = []
    for m, s in enumerate(sv):
        if s > 1e-12 * sv[0]:
            op = sum(u[a, m] * pauli_string(n_s, list(enumerate(p))) for a, p in enumerate(sys_strings))
            ops.append(s * op)
    return ops


def test_pointer_basis_approximate_matches_oracle():
    terms = [(1.0, [(0, "Z"), (1, "Z")]), (0.1, [(0, "X"), (1, "X")])]
    pb = es.pointer_basis(build(2, terms), [0])
    assert not pb.exact
    assert np.allclose(pb.vectors, np.eye(2))
    ops = schmidt_oracle(1, 1, terms)
    residual = max(np.linalg.norm(a @ b - b @ a, 2) for a, b in itertools.combinations(ops, 2))
    assert pb.residual == pytest.approx(residual, abs=1e-12)
    assert pb.residual == pytest.approx(0.2, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_schmidt_values_match_pauli_oracle(seed):
    rng = np.random.default_rng(seed)
    terms = [(rng.normal(), [(0, p), (1, q), (2, r)]) for p, q, r in itertools.product("XZ", repeat=3) if rng.random() < 0.5]
    terms.append((1.0, [(0, "Z"), (2, "Z")]))
    h = build(3, terms)
    got, _, _ = es.operator_schmidt(h, [0, 1], [2])
    ops = schmidt_oracle(2, 1, terms)
    assert len(got) == len(ops)
    for t, op in zip(got, ops):
        assert np.linalg.norm(t.system_op) == pytest.approx(np.linalg.norm(op), rel=1e-9)


def test_coupling_matrix_zz():
    g = 0.8
    cm = es.coupling_matrix(build(2, [f"{g} * Z0 Z1"]), [0], np.eye(2), np.eye(2))
    assert np.allclose(cm.lam, [[g, -g], [-g, g]], atol=1e-12)
    assert np.allclose(cm.reconstruct(), g * np.kron(PAULI["Z"], PAULI["Z"]))


def test_coupling_matrix_offset_rows():
    h = build(2, ["1.0 * Z0 Z1", "0.5 * Z0"])
    cm = es.coupling_matrix(h, [0], np.eye(2), np.eye(2), fragment=[1])
    dense = h.to_dense()
    for j in range(2):
        for k in range(2):
            v = np.zeros(4)
            v[2 * k + j] = 1.0
            assert cm.lam[j, k] == pytest.approx((v @ dense @ v).real)
    assert np.allclose(cm.lam, [[1.5, -1.5], [-0.5, 0.5]])


def test_coupling_matrix_errors():
    h = build(2, ["1.0 * Z0 Z1", "0.1 * X0 X1"])
    with pytest.raises(NumericError, match="do not jointly diagonalize"):
        es.coupling_matrix(h, [0], np.eye(2), np.eye(2))
    with pytest.raises(NumericError):
        es.coupling_matrix(build(2, []), [0], np.eye(2), np.eye(2), fragment=[1])
    with pytest.raises(ValidationError):
        es.coupling_matrix(build(2, ["1.0 * Z0 Z1"]), [0], np.ones((2, 2)), np.eye(2))


def test_halo_no_room():
    entries = es.halo_scan(build(2, ["1.0 * Z0 Z1"]), [0], [1], 0.5)
    assert len(entries) == 1
    assert entries[0].candidate == {0, 1} and math.isinf(entries[0].ratio) and not entries[0].in_halo


def test_halo_zero_couplings():
    h = build(4, ["1.0 * X0", "1.0 * Z2"])
    assert not any(e.in_halo for e in es.halo_scan(h, [0, 1], [2, 3], 0.5))


def exhaustive_halo(h, dense, n, system, fragment, eta):
    """Brute-force candidate table built on the projection oracle."""
    universe = set(system) | set(fragment)
    out = {}
    for cand in itertools.chain(
        (set(system) | {k} for k in fragment), (set(system) - {k} for k in system if len(system) > 1)
    ):
        frag = sorted(universe - cand)
        if not frag:
            out[frozenset(cand)] = math.inf
            continue
        ns, nf, ni = split_projections(dense, n, sorted(cand), frag)
        out[frozenset(cand)] = math.inf if ni <= 1e-12 else max(ns, nf) / ni
    return out


@pytest.mark.parametrize("system", [(2, 3), (0, 2), (0, 3)])
def test_halo_scan_matches_exhaustive_oracle(system):
    h = ring()
    dense = h.to_dense()
    fragment = [k for k in range(6) if k not in system]
    entries = es.halo_scan(h, system, fragment, 0.5)
    ref = exhaustive_halo(h, dense, 6, system, fragment, 0.5)
    assert {e.candidate: e.ratio for e in entries}.keys() == ref.keys()
    for e in entries:
        assert e.ratio == pytest.approx(ref[e.candidate], abs=1e-9)
        assert e.in_halo == (ref[e.candidate] <= 0.5)
    ratios = [e.ratio for e in entries]
    assert ratios == sorted(ratios)


def test_halo_growth_terminates_in_open_chain():
    terms = [(1.0, [(k, "Z"), (k + 1, "Z")]) for k in range(5)]
    h = build(6, terms)
    path = es.halo_growth(h, [2, 3], [0, 1, 4, 5], 0.5)
    last = path[-1]
    rest = set(range(6)) - last
    assert all(not e.in_halo for e in es.halo_scan(h, last, rest, 0.5) if e.kind == "add") if rest else True


def test_exclusion_examples():
    h = build(4, ["1.0 * Z0 Z1", "1.0 * Z2 Z3", "0.01 * Z1 Z2"])
    out = es.exclusion_check(h, [0], [2], 0.1)
    assert not out.both and not out.degenerate
    out = es.exclusion_check(build(2, ["1.0 * Z0 Z1"]), [0], [1], 0.1)
    assert out.degenerate and not out.both
    out = es.exclusion_check(build(3, []), [0], [1], 0.1)
    assert not out.both


def test_exclusion_direct_coupling_loophole():
    # two systems coupled only to each other: the containment argument does not apply
    out = es.exclusion_check(build(3, ["1.0 * Z0 Z1", "0.01 * X2"]), [0], [1], 0.1)
    assert out.both


@given(st.integers(0, 2**32 - 1), st.integers(3, 5), st.floats(0.01, 0.2))
def test_exclusion_without_direct_coupling(seed, n, eta):
    rng = np.random.default_rng(seed)
    h = build(n, [t for t in random_two_local(rng, n, field=0.05, coupling=3.0) if {k for k, _ in t[1]} != {0, 1}])
    assert not es.exclusion_check(h, [0], [1], eta).both


def test_separability_examples():
    prod = np.kron([1, 0], [1, 1]) / math.sqrt(2)
    mi, sep = es.fragment_separability(prod, [0], [1])
    assert abs(mi) <= 1e-10 and sep
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    mi, sep = es.fragment_separability(bell, [0], [1])
    assert mi == pytest.approx(2 * math.log(2), abs=1e-9) and not sep


def test_separability_ghz_matches_oracle():
    ghz = np.zeros(8)
    ghz[0] = ghz[7] = 1 / math.sqrt(2)
    mi, _ = es.fragment_separability(ghz, [0], [1])
    # classical correlations only: ln 2
    assert mi == pytest.approx(mutual_information(ghz, [0], [1], 3), abs=1e-12)
    assert mi == pytest.approx(math.log(2), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_separability_random_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    s = es.fragment_separability(psi, [0, 3], [1])
    assert s.mutual_information == pytest.approx(mutual_information(psi, [0, 3], [1], 4), abs=1e-10)
