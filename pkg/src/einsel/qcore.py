"""Dense linear algebra on registers of two-level entities.

Entity 0 is the most significant tensor factor, so basis index ``b`` of an
``n``-entity register holds entity ``k`` in bit ``n - 1 - k``.  Units have
hbar = 1.
"""

from __future__ import annotations

import os
from typing import Iterable

import numpy as np

from .errors import CapacityError, ValidationError

DEFAULT_MAX_ENTITIES = 10
HARD_MAX_ENTITIES = 12

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
PSD_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-10
DENSITY_EIG_TOL = 1e-9

OPERATOR_KINDS = ("hermitian", "unitary", "psd", "general")


def max_entities() -> int:
    """Entity cap, from ``EINSEL_MAX_ENTITIES`` when set (at most 12)."""
    raw = os.environ.get("EINSEL_MAX_ENTITIES")
    if raw is None or raw.strip() == "":
        return DEFAULT_MAX_ENTITIES
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"EINSEL_MAX_ENTITIES must be an integer, got {raw!r}") from None
    if not 1 <= value <= HARD_MAX_ENTITIES:
        raise CapacityError(
            f"EINSEL_MAX_ENTITIES={value} outside 1..{HARD_MAX_ENTITIES}"
        )
    return value


def entity_count(dim: int) -> int:
    """Number of entities for a power-of-two dimension."""
    n = int(dim).bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise ValidationError(f"dimension {dim} is not a power of 2")
    return n


def check_capacity(dim: int) -> None:
    cap = max_entities()
    if dim > (1 << cap):
        raise CapacityError(f"dimension {dim} exceeds the {cap}-entity cap ({1 << cap})")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex, copy=True)
    arr.setflags(write=False)
    return arr


class StateVector:
    """Normalized pure state of ``n_entities`` two-level entities."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, *, atol: float = NORM_TOL):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        entity_count(amps.size)
        check_capacity(amps.size)
        if not np.all(np.isfinite(amps)):
            raise ValidationError("state amplitudes must be finite")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > atol:
            raise ValidationError(f"state is not normalized: |psi|^2 = {norm2!r}")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0.0:
            raise ValidationError("cannot normalize the zero vector")
        return cls(amps / norm)

    @classmethod
    def basis(cls, index: int, n_entities: int) -> "StateVector":
        amps = np.zeros(1 << n_entities, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_entities(self) -> int:
        return entity_count(self.dim)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.amplitudes
        return self.amplitudes.astype(dtype)

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        return f"StateVector(dim={self.dim})"


class Operator:
    """Square matrix tagged with the property it was validated against."""

    __slots__ = ("entries", "kind")

    def __init__(self, entries, kind: str = "general"):
        mat = np.asarray(entries, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValidationError(f"operator must be square, got shape {mat.shape}")
        if kind not in OPERATOR_KINDS:
            raise ValidationError(f"unknown operator kind {kind!r}")
        check_capacity(mat.shape[0])
        if not np.all(np.isfinite(mat)):
            raise ValidationError("operator entries must be finite")
        if kind in ("hermitian", "psd"):
            res = hermitian_residual(mat)
            if res > HERMITIAN_TOL:
                raise ValidationError(f"operator is not hermitian (residual {res:.3e})")
        if kind == "psd":
            low = float(np.linalg.eigvalsh(_hermitian_part(mat))[0])
            if low < -PSD_TOL:
                raise ValidationError(f"operator is not PSD (min eigenvalue {low:.3e})")
        if kind == "unitary":
            res = float(np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0]))))
            if res > UNITARY_TOL:
                raise ValidationError(f"operator is not unitary (residual {res:.3e})")
        object.__setattr__(self, "entries", _readonly(mat))
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __repr__(self) -> str:
        return f"Operator(dim={self.dim}, kind={self.kind!r})"


class DensityOperator:
    """Hermitian, unit-trace, positive semi-definite matrix."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        mat = np.asarray(entries, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValidationError(f"density operator must be square, got shape {mat.shape}")
        res = hermitian_residual(mat)
        if res > HERMITIAN_TOL:
            raise ValidationError(f"density operator is not hermitian (residual {res:.3e})")
        tr = complex(np.trace(mat))
        if abs(tr - 1.0) > DENSITY_TRACE_TOL:
            raise ValidationError(f"density operator trace is {tr!r}, expected 1")
        low = float(np.linalg.eigvalsh(_hermitian_part(mat))[0])
        if low < -DENSITY_EIG_TOL:
            raise ValidationError(f"density operator has eigenvalue {low:.3e} < 0")
        object.__setattr__(self, "entries", _readonly(mat))

    def __setattr__(self, name, value):
        raise AttributeError("DensityOperator is immutable")

    @classmethod
    def from_state(cls, psi) -> "DensityOperator":
        amps = np.asarray(psi, dtype=complex).reshape(-1)
        return cls(np.outer(amps, amps.conj()))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __repr__(self) -> str:
        return f"DensityOperator(dim={self.dim})"


def hermitian_residual(a) -> float:
    mat = np.asarray(a)
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(mat - mat.conj().T)))


def _hermitian_part(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def _as_matrix(a) -> np.ndarray:
    mat = np.asarray(a, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {mat.shape}")
    return mat


def _as_hermitian(a) -> np.ndarray:
    mat = _as_matrix(a)
    res = hermitian_residual(mat)
    if res > HERMITIAN_TOL:
        raise ValidationError(f"operator is not hermitian (residual {res:.3e})")
    return _hermitian_part(mat)


def _kron_kind(a: str, b: str) -> str:
    if a == b:
        return a
    if {a, b} <= {"hermitian", "psd"}:
        return "hermitian"
    return "general"


def tensor_product(a, b):
    """Kronecker product of two states or two operators.

    The left operand becomes the more significant factor.  Result type
    follows the operands: ``StateVector`` for states, ``Operator`` for
    operators (kind preserved where the product provably keeps it),
    ``DensityOperator`` for density operators and plain arrays otherwise.

    Raises
    ------
    CapacityError
        If the product dimension exceeds the configured entity cap.
    """
    x = np.asarray(a, dtype=complex)
    y = np.asarray(b, dtype=complex)
    if x.ndim != y.ndim:
        raise ValidationError("tensor_product needs two states or two operators")
    check_capacity(x.shape[0] * y.shape[0])
    out = np.kron(x, y)
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector.normalized(out)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(out)
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(out, _kron_kind(a.kind, b.kind))
    return out


def kron_all(factors: Iterable) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for f in factors:
        out = np.kron(out, np.asarray(f, dtype=complex))
    return out


def _canonical_block(vecs: np.ndarray, thresh: float = 1e-8) -> np.ndarray:
    """Deterministic orthonormal basis of the span of ``vecs``.

    Gram-Schmidt over the projections of e_0, e_1, ... onto the span, taken in
    index order and skipping projections that are already dependent.
    """
    dim, m = vecs.shape
    coeffs = vecs.conj()  # row i: coordinates of P e_i in the columns of vecs
    if m == 1:
        idx = int(np.argmax(np.abs(coeffs[:, 0]) > thresh))
        c = coeffs[idx, 0]
        return vecs * (c / abs(c))
    q, r = np.linalg.qr(coeffs[:m].T)
    diag = np.diag(r)
    if np.all(np.abs(diag) > thresh):
        q = q * (diag / np.abs(diag))
        return vecs @ q
    chosen: list[np.ndarray] = []
    for i in range(dim):
        c = coeffs[i].copy()
        for u in chosen:
            c -= u * np.vdot(u, c)
        nrm = np.linalg.norm(c)
        if nrm > thresh:
            chosen.append(c / nrm)
            if len(chosen) == m:
                break
    if len(chosen) < m:
        # the e_i span everything, so this only triggers on severe round-off
        q, _ = np.linalg.qr(vecs)
        return q
    return vecs @ np.column_stack(chosen)


def eigh(a, *, degeneracy_tol: float = 1e-9) -> tuple[np.ndarray, Operator]:
    """Eigendecomposition of a hermitian operator with deterministic vectors.

    Eigenvalues are ascending.  Eigenvalues closer than
    ``degeneracy_tol * max(1, |lambda|_max)`` form a degenerate block; inside
    each block the basis is rebuilt by Gram-Schmidt over the computational
    basis vectors in index order, which also fixes every eigenvector's phase
    (its first non-negligible component is real and positive).
    """
    mat = _as_hermitian(a)
    w, v = np.linalg.eigh(mat)
    if w.size == 0:
        return w, Operator(v, "unitary")
    tol = degeneracy_tol * max(1.0, float(np.max(np.abs(w))))
    breaks = np.flatnonzero(np.diff(w) > tol) + 1
    starts = np.concatenate(([0], breaks))
    stops = np.concatenate((breaks, [w.size]))
    out = np.empty_like(v)
    singles = starts[stops - starts == 1]
    if singles.size:
        cols = v[:, singles]
        mask = np.abs(cols) > 1e-8
        first = np.argmax(mask, axis=0)
        lead = cols[first, np.arange(singles.size)]
        out[:, singles] = cols * (lead.conj() / np.abs(lead))
    for s, e in zip(starts, stops):
        if e - s > 1:
            out[:, s:e] = _canonical_block(v[:, s:e])
    return w, Operator(out, "unitary")


class Propagator:
    """Caches the eigendecomposition of ``h`` to apply e^{-iht} repeatedly."""

    def __init__(self, h):
        mat = _as_hermitian(h)
        self.energies, self.vectors = np.linalg.eigh(mat)
        self.dim = mat.shape[0]

    def coefficients(self, psi) -> np.ndarray:
        amps = np.asarray(psi, dtype=complex).reshape(-1)
        if amps.size != self.dim:
            raise ValidationError(f"state dim {amps.size} does not match operator dim {self.dim}")
        return self.vectors.conj().T @ amps

    def at(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        out = self.vectors @ (np.exp(-1j * self.energies * t) * coeffs)
        return out / np.linalg.norm(out)

    def apply(self, psi, t: float) -> np.ndarray:
        return self.at(self.coefficients(psi), t)


def evolve(psi, h, t: float) -> StateVector:
    """Return e^{-iht}|psi> computed through the eigendecomposition of ``h``."""
    if not np.isfinite(t):
        raise ValidationError(f"time must be finite, got {t!r}")
    return StateVector(Propagator(h).apply(psi, float(t)))


def _density_matrix(rho) -> np.ndarray:
    arr = np.asarray(rho, dtype=complex)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    return _as_matrix(arr)


def partial_trace(rho, keep: Iterable[int], n_entities: int | None = None) -> DensityOperator:
    """Reduced density operator on the entities in ``keep``.

    ``rho`` may be a density operator or a pure state; kept entities appear in
    ascending index order in the result.
    """
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValidationError("partial_trace needs a nonempty keep set")
    arr = np.asarray(rho, dtype=complex)
    dim = arr.shape[0]
    n = entity_count(dim) if n_entities is None else n_entities
    if (1 << n) != dim:
        raise ValidationError(f"dimension {dim} does not match {n} entities")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValidationError(f"keep set {keep} out of range for {n} entities")
    drop = [k for k in range(n) if k not in keep]
    dk = 1 << len(keep)
    if arr.ndim == 1:
        m = arr.reshape([2] * n).transpose(keep + drop).reshape(dk, -1)
        red = m @ m.conj().T
    else:
        t = _as_matrix(arr).reshape([2] * (2 * n))
        t = t.transpose(keep + drop + [n + k for k in keep] + [n + k for k in drop])
        dd = dim // dk
        red = np.einsum("ajbj->ab", t.reshape(dk, dd, dk, dd))
    return DensityOperator(_hermitian_part(red))


def spectral_norm(a) -> float:
    """Largest singular value (max |eigenvalue| for hermitian input)."""
    mat = _as_matrix(a)
    if mat.size == 0:
        return 0.0
    if hermitian_residual(mat) <= HERMITIAN_TOL:
        w = np.linalg.eigvalsh(_hermitian_part(mat))
        return float(max(abs(w[0]), abs(w[-1])))
    return float(np.linalg.norm(mat, 2))


def von_neumann_entropy(rho, *, cutoff: float = 1e-12) -> float:
    """Entropy -sum(l ln l) in nats; eigenvalues below ``cutoff`` count as zero."""
    w = np.linalg.eigvalsh(_hermitian_part(_density_matrix(rho)))
    w = w[w >= cutoff]
    return float(max(0.0, -np.sum(w * np.log(w))))


def commutator_norm(a, b) -> float:
    x = np.asarray(a)
    y = np.asarray(b)
    return spectral_norm(x @ y - y @ x)
