"""Hamiltonian-dominance einselection analyses.

A system ``S`` with a fragment ``F`` of its environment is einselected when
both self-Hamiltonians are small next to the S-F interaction:
``max(|H_S|, |H_F|) <= eta * |H_SF|`` in spectral norm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import qcore
from .errors import NumericError, ValidationError
from .hamiltonian import HamiltonianTerms, decompose_bipartite

DEFAULT_ETA = 0.1
ZERO_INTERACTION = 1e-12
COMMUTE_TOL = 1e-9
LEAKAGE_TOL = 1e-9


def _entity_set(entities: Iterable[int], name: str, n: int, *, allow_empty: bool = False) -> frozenset[int]:
    out = frozenset(int(e) for e in entities)
    if not out and not allow_empty:
        raise ValidationError(f"{name} must be nonempty")
    bad = sorted(e for e in out if not 0 <= e < n)
    if bad:
        raise ValidationError(f"{name} entities {bad} out of range for {n} entities")
    return out


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0.0 < eta < 1.0:
        raise ValidationError(f"eta must lie in (0, 1), got {eta!r}")
    return eta


@dataclass(frozen=True)
class EinselectReport:
    system: frozenset[int]
    fragment: frozenset[int]
    norm_s: float
    norm_f: float
    norm_int: float
    ratio_s: float
    ratio_f: float
    eta: float
    satisfied: bool

    @property
    def ratio(self) -> float:
        return max(self.ratio_s, self.ratio_f)

    def to_dict(self) -> dict:
        return {
            "system": sorted(self.system),
            "fragment": sorted(self.fragment),
            "norm_s": self.norm_s,
            "norm_f": self.norm_f,
            "norm_int": self.norm_int,
            "ratio_s": _finite_or_none(self.ratio_s),
            "ratio_f": _finite_or_none(self.ratio_f),
            "eta": self.eta,
            "satisfied": self.satisfied,
        }


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def check_conditions(h: HamiltonianTerms, system, fragment, eta: float = DEFAULT_ETA) -> EinselectReport:
    """Evaluate the dominance conditions for ``system`` against ``fragment``.

    ``h`` is first restricted to strings supported inside system and fragment.
    A vanishing interaction yields infinite ratios and ``satisfied=False``.
    """
    eta = _check_eta(eta)
    n = h.entity_count
    s = _entity_set(system, "system", n)
    f = _entity_set(fragment, "fragment", n)
    if s & f:
        raise ValidationError(f"system and fragment overlap on {sorted(s & f)}")
    local = h.restrict(s | f)
    h_s = local.select(lambda sup: sup <= s)
    h_f = local.select(lambda sup: sup <= f)
    h_i = local.select(lambda sup: bool(sup & s) and bool(sup & f))
    ns, nf, ni = h_s.norm(), h_f.norm(), h_i.norm()
    if ni <= ZERO_INTERACTION:
        rs = rf = math.inf
    else:
        rs, rf = ns / ni, nf / ni
    ok = ni > ZERO_INTERACTION and max(rs, rf) <= eta
    return EinselectReport(s, f, ns, nf, ni, rs, rf, eta, ok)


@dataclass(frozen=True)
class SchmidtTerm:
    """One product term ``system_op (x) fragment_op`` of an operator-Schmidt sum.

    ``fragment_op`` is scaled to Tr(B^dag B) = d_F so ``system_op`` carries the
    energy scale.
    """

    value: float
    system_op: np.ndarray
    fragment_op: np.ndarray


def operator_schmidt(h_int: HamiltonianTerms, system, fragment=None, *, rtol: float = 1e-12) -> tuple[list[SchmidtTerm], list[int], list[int]]:
    """Operator-Schmidt decomposition of ``h_int`` across system | fragment.

    The dense matrix on (system, fragment) is reshuffled so that rows index
    system matrix elements and columns fragment matrix elements; its SVD gives
    ``H = sum_m sigma_m A_m (x) B_m``.  Returns the terms with the ordered
    system and fragment registers used.
    """
    n = h_int.entity_count
    s = sorted(_entity_set(system, "system", n))
    if fragment is None:
        f = sorted(h_int.support - set(s))
    else:
        f = sorted(_entity_set(fragment, "fragment", n, allow_empty=True))
    if set(s) & set(f):
        raise ValidationError("system and fragment overlap")
    if not f:
        raise ValidationError("interaction has no support outside the system")
    ds, df = 1 << len(s), 1 << len(f)
    mat = h_int.to_dense(s + f, include_offset=False)
    resh = mat.reshape(ds, df, ds, df).transpose(0, 2, 1, 3).reshape(ds * ds, df * df)
    u, sv, vh = np.linalg.svd(resh)
    if sv.size == 0 or sv[0] <= ZERO_INTERACTION:
        return [], s, f
    keep = sv > rtol * sv[0]
    terms = []
    root_df = math.sqrt(df)
    for m in np.flatnonzero(keep):
        a = u[:, m].reshape(ds, ds) * (sv[m] / root_df)
        b = vh[m].reshape(df, df) * root_df
        terms.append(SchmidtTerm(float(sv[m]), a, b))
    return terms, s, f


def _hermitian_parts(ops: list[np.ndarray], tol: float = 1e-14) -> list[np.ndarray]:
    out = []
    for a in ops:
        for part in (0.5 * (a + a.conj().T), 0.5j * (a.conj().T - a)):
            if np.max(np.abs(part)) > tol:
                out.append(part)
    return out


def _simultaneous_eigenbasis(ops: list[np.ndarray], dim: int) -> np.ndarray:
    """Refine a common eigenbasis operator by operator, block by block."""
    blocks = [np.eye(dim, dtype=complex)]
    for op in ops:
        refined = []
        for basis in blocks:
            if basis.shape[1] == 1:
                refined.append(basis)
                continue
            sub = basis.conj().T @ op @ basis
            w, v = qcore.eigh(0.5 * (sub + sub.conj().T))
            vecs = basis @ np.asarray(v)
            tol = 1e-9 * max(1.0, float(np.max(np.abs(w))))
            start = 0
            for k in range(1, w.size + 1):
                if k == w.size or w[k] - w[k - 1] > tol:
                    refined.append(vecs[:, start:k])
                    start = k
        blocks = refined
    return np.column_stack(blocks)


def _canonical_order(vectors: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Fix phases (first significant component real positive) and sort columns.

    Columns are ordered by descending real part, then imaginary part, of their
    components in index order, so {|0>,|1>} and {|+>,|->} come out in that order.
    """
    cols = []
    for k in range(vectors.shape[1]):
        v = vectors[:, k]
        lead = v[int(np.argmax(np.abs(v) > tol))]
        cols.append(v * (abs(lead) / lead))

    def key(v):
        r = np.round(v.real, 9) + 0.0
        i = np.round(v.imag, 9) + 0.0
        return tuple(x for pair in zip(-r, -i) for x in pair)

    cols.sort(key=key)
    return np.column_stack(cols)


@dataclass(frozen=True)
class PointerBasis:
    """Pointer basis of ``system`` (columns of ``vectors``).

    ``exact`` is True when all Schmidt factors on the system commute; otherwise
    the basis diagonalizes the dominant factor only and ``residual`` is the
    largest pairwise commutator norm among the factors.
    """

    system: tuple[int, ...]
    fragment: tuple[int, ...]
    vectors: np.ndarray
    exact: bool
    residual: float
    schmidt_values: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "system": list(self.system),
            "fragment": list(self.fragment),
            "exact": self.exact,
            "residual": self.residual,
            "schmidt_values": list(self.schmidt_values),
        }


def pointer_basis(h_int: HamiltonianTerms, system, fragment=None) -> PointerBasis:
    """Basis of ``system`` selected by the interaction ``h_int``."""
    terms, s, f = operator_schmidt(h_int, system, fragment)
    if not terms:
        raise NumericError("no basis einselected: interaction vanishes")
    ops = [t.system_op for t in terms]
    residual = 0.0
    for a, b in itertools.combinations(ops, 2):
        residual = max(residual, qcore.commutator_norm(a, b))
    ds = 1 << len(s)
    exact = residual <= COMMUTE_TOL
    chosen = _hermitian_parts(ops) if exact else _hermitian_parts(ops[:1])
    vectors = _canonical_order(_simultaneous_eigenbasis(chosen, ds))
    return PointerBasis(tuple(s), tuple(f), vectors, exact, residual, tuple(t.value for t in terms))


@dataclass(frozen=True)
class CouplingMatrix:
    """Couplings ``lam[j, k] = <s_k f_j| H |s_k f_j>`` (rows: fragment basis)."""

    lam: np.ndarray
    s_basis: np.ndarray
    f_basis: np.ndarray
    system: tuple[int, ...]
    fragment: tuple[int, ...]
    leakage: float

    def reconstruct(self) -> np.ndarray:
        """Dense ``sum_jk lam_jk |s_k f_j><s_k f_j|`` on the (system, fragment) register."""
        basis = np.kron(self.s_basis, self.f_basis)
        diag = self.lam.T.reshape(-1)
        return (basis * diag) @ basis.conj().T


def _check_orthonormal(basis: np.ndarray, name: str, dim: int) -> np.ndarray:
    b = np.asarray(basis, dtype=complex)
    if b.shape != (dim, dim):
        raise ValidationError(f"{name} must be {dim}x{dim}, got {b.shape}")
    res = float(np.max(np.abs(b.conj().T @ b - np.eye(dim))))
    if res > 1e-9:
        raise ValidationError(f"{name} is not orthonormal (residual {res:.3e})")
    return b


def coupling_matrix(h_int: HamiltonianTerms, system, s_basis, f_basis, fragment=None) -> CouplingMatrix:
    """Diagonal couplings of ``h_int`` in the product basis ``s_basis (x) f_basis``.

    Raises ``NumericError`` when the bases leave off-diagonal elements above
    1e-9 or when the interaction vanishes.
    """
    n = h_int.entity_count
    s = sorted(_entity_set(system, "system", n))
    if fragment is None:
        f = sorted(h_int.support - set(s))
    else:
        f = sorted(_entity_set(fragment, "fragment", n))
    if h_int.is_zero:
        raise NumericError("no basis einselected: interaction vanishes")
    if not f:
        raise ValidationError("interaction has no support outside the system")
    ds, df = 1 << len(s), 1 << len(f)
    sb = _check_orthonormal(s_basis, "s_basis", ds)
    fb = _check_orthonormal(f_basis, "f_basis", df)
    basis = np.kron(sb, fb)
    mat = basis.conj().T @ h_int.to_dense(s + f, include_offset=False) @ basis
    diag = np.diag(mat).copy()
    off = mat - np.diag(diag)
    leakage = float(np.max(np.abs(off))) if off.size else 0.0
    if leakage > LEAKAGE_TOL:
        raise NumericError(f"bases do not jointly diagonalize the interaction (leakage {leakage:.3e})")
    lam = diag.real.reshape(ds, df).T.copy()
    return CouplingMatrix(lam, sb, fb, tuple(s), tuple(f), leakage)


@dataclass(frozen=True)
class HaloEntry:
    candidate: frozenset[int]
    fragment: frozenset[int]
    kind: str
    ratio: float
    in_halo: bool
    report: EinselectReport | None = None

    def to_dict(self) -> dict:
        return {
            "candidate": sorted(self.candidate),
            "fragment": sorted(self.fragment),
            "kind": self.kind,
            "ratio": _finite_or_none(self.ratio),
            "in_halo": self.in_halo,
        }


def halo_candidates(system, fragment, *, swaps: bool = False) -> list[tuple[str, frozenset[int]]]:
    """Single-entity additions and removals of ``system`` (plus swaps if asked)."""
    s = frozenset(system)
    f = frozenset(fragment)
    out: list[tuple[str, frozenset[int]]] = []
    for k in sorted(f):
        out.append(("add", s | {k}))
    for k in sorted(s):
        if len(s) > 1:
            out.append(("remove", s - {k}))
    if swaps:
        for r in sorted(s):
            for a in sorted(f):
                out.append(("swap", (s - {r}) | {a}))
    return out


def halo_scan(h: HamiltonianTerms, system, fragment, eta: float = DEFAULT_ETA, *, swaps: bool = False) -> list[HaloEntry]:
    """Re-check the conditions for every single-entity alteration of ``system``.

    Each candidate ``S'`` is tested against ``F' = (S | F) - S'``.  A candidate
    that leaves no fragment gets an infinite ratio.  Entries are sorted by
    ratio, ties broken by the candidate's sorted entity tuple.
    """
    eta = _check_eta(eta)
    n = h.entity_count
    s = _entity_set(system, "system", n)
    f = _entity_set(fragment, "fragment", n)
    if s & f:
        raise ValidationError(f"system and fragment overlap on {sorted(s & f)}")
    universe = s | f
    entries = []
    for kind, cand in halo_candidates(s, f, swaps=swaps):
        frag = universe - cand
        if not frag:
            entries.append(HaloEntry(cand, frag, kind, math.inf, False))
            continue
        rep = check_conditions(h, cand, frag, eta)
        entries.append(HaloEntry(cand, frag, kind, rep.ratio, rep.satisfied, rep))
    entries.sort(key=lambda e: (e.ratio, len(e.candidate), tuple(sorted(e.candidate))))
    return entries


def halo_growth(h: HamiltonianTerms, system, fragment, eta: float = DEFAULT_ETA) -> list[frozenset[int]]:
    """Grow ``system`` one entity at a time while some addition stays in the halo.

    At each step the in-halo addition with the lowest ratio is taken.  Returns
    the sequence of systems visited, starting with ``system``; the last one has
    no addition satisfying the conditions.
    """
    s = frozenset(system)
    universe = s | frozenset(fragment)
    path = [s]
    while True:
        frag = universe - s
        adds = [e for e in halo_scan(h, s, frag, eta) if e.kind == "add" and e.in_halo] if frag else []
        if not adds:
            return path
        s = adds[0].candidate
        path.append(s)


@dataclass(frozen=True)
class ExclusionResult:
    report1: EinselectReport | None
    report2: EinselectReport | None
    both: bool
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "report1": None if self.report1 is None else self.report1.to_dict(),
            "report2": None if self.report2 is None else self.report2.to_dict(),
            "both": self.both,
            "degenerate": self.degenerate,
        }


def exclusion_check(h: HamiltonianTerms, s1, s2, eta: float = DEFAULT_ETA) -> ExclusionResult:
    """Test two disjoint systems, each against the complement of itself.

    ``F1`` is everything outside ``s1`` (so it contains ``s2``) and ``F2`` is
    everything outside ``s2``.  When a fragment consists of nothing but the
    other system it does not surround anything and the pair is reported as
    degenerate with ``both=False``.
    """
    eta = _check_eta(eta)
    n = h.entity_count
    a = _entity_set(s1, "s1", n)
    b = _entity_set(s2, "s2", n)
    if a & b:
        raise ValidationError(f"s1 and s2 overlap on {sorted(a & b)}")
    everything = frozenset(range(n))
    f1, f2 = everything - a, everything - b
    degenerate = f1 == b or f2 == a
    r1 = check_conditions(h, a, f1, eta)
    r2 = check_conditions(h, b, f2, eta)
    both = r1.satisfied and r2.satisfied and not degenerate
    return ExclusionResult(r1, r2, both, degenerate)


@dataclass(frozen=True)
class Separability:
    mutual_information: float
    separable: bool
    entropies: tuple[float, float, float]

    def __iter__(self):
        return iter((self.mutual_information, self.separable))

    def to_dict(self) -> dict:
        return {
            "mutual_information": self.mutual_information,
            "separable": self.separable,
            "entropy_f1": self.entropies[0],
            "entropy_f2": self.entropies[1],
            "entropy_joint": self.entropies[2],
        }


def fragment_separability(psi, f1, f2, tol: float = 1e-6) -> Separability:
    """Quantum mutual information I(F1:F2) of the reduced state of a pure ``psi``."""
    amps = np.asarray(psi, dtype=complex).reshape(-1)
    n = qcore.entity_count(amps.size)
    a = _entity_set(f1, "f1", n)
    b = _entity_set(f2, "f2", n)
    if a & b:
        raise ValidationError(f"f1 and f2 overlap on {sorted(a & b)}")
    s_a = qcore.von_neumann_entropy(qcore.partial_trace(amps, a, n))
    s_b = qcore.von_neumann_entropy(qcore.partial_trace(amps, b, n))
    s_ab = qcore.von_neumann_entropy(qcore.partial_trace(amps, a | b, n))
    mi = max(0.0, s_a + s_b - s_ab)
    return Separability(mi, mi <= tol, (s_a, s_b, s_ab))
