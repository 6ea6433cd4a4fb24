"""POVMs over the full register and the rule deciding when an outcome is recorded."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import qcore
from .errors import NumericError, ValidationError

PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
ORTHONORMAL_TOL = 1e-9
IC_RANK_TOL = 1e-9
DEFAULT_EPSILON = 0.01
DEFAULT_DELTA = 1e-6
IC_MAX_DIM = 32

MODES = ("witness", "projective")


class PovmValidationError(ValidationError):
    """Raised by :func:`validate`; ``invariant`` names what failed."""

    def __init__(self, invariant: str, message: str, residual: float | None = None):
        self.invariant = invariant
        self.residual = residual
        super().__init__(f"{invariant}: {message}")


@dataclass(frozen=True, eq=False)
class Povm:
    dim: int
    effects: tuple[np.ndarray, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.effects)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @property
    def n_entities(self) -> int:
        return qcore.entity_count(self.dim)

    def stacked(self) -> np.ndarray:
        return np.stack(self.effects)


def psd_residual(effect: np.ndarray) -> float:
    """How far ``effect`` is from PSD: hermiticity defect or -min eigenvalue."""
    herm = qcore.hermitian_residual(effect)
    low = float(np.linalg.eigvalsh(0.5 * (effect + effect.conj().T))[0])
    return max(herm, -low, 0.0)


def completeness_residual(effects: Sequence[np.ndarray]) -> float:
    total = np.sum(np.stack([np.asarray(e) for e in effects]), axis=0)
    return float(np.max(np.abs(total - np.eye(total.shape[0]))))


def validate(effects, labels=None) -> Povm:
    """Check that ``effects`` form a POVM and return it.

    Parameters
    ----------
    effects : sequence of array_like
        Square matrices of one common dimension.
    labels : sequence of str, optional
        Outcome labels; defaults to ``"0"``, ``"1"``, ...

    Raises
    ------
    PovmValidationError
        With ``invariant`` one of ``shape``, ``psd``, ``completeness`` or
        ``labels`` and the offending numeric ``residual`` where there is one.
    """
    mats = [np.array(e, dtype=complex) for e in effects]
    if not mats:
        raise PovmValidationError("shape", "a POVM needs at least one effect")
    dim = mats[0].shape[0] if mats[0].ndim == 2 else -1
    for i, m in enumerate(mats):
        if m.shape != (dim, dim):
            raise PovmValidationError("shape", f"effect {i} has shape {m.shape}, expected ({dim}, {dim})")
        if not np.all(np.isfinite(m)):
            raise PovmValidationError("shape", f"effect {i} has non-finite entries")
    qcore.check_capacity(dim)
    if labels is None:
        labels = [str(i) for i in range(len(mats))]
    labels = tuple(str(x) for x in labels)
    if len(labels) != len(mats):
        raise PovmValidationError("labels", f"{len(labels)} labels for {len(mats)} effects")
    if len(set(labels)) != len(labels):
        dup = sorted({x for x in labels if labels.count(x) > 1})
        raise PovmValidationError("labels", f"duplicate labels {dup}")
    for i, m in enumerate(mats):
        res = psd_residual(m)
        if res > PSD_TOL:
            raise PovmValidationError("psd", f"effect {labels[i]!r} violates PSD by {res:.3e}", res)
    res = completeness_residual(mats)
    if res > COMPLETENESS_TOL:
        raise PovmValidationError("completeness", f"effects sum to identity only within {res:.3e}", res)
    out = []
    for m in mats:
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        out.append(m)
    return Povm(dim, tuple(out), labels)


def projective_from_basis(basis, labels=None) -> Povm:
    """Rank-1 projectors onto the columns of ``basis`` (or a list of vectors)."""
    if isinstance(basis, np.ndarray) and basis.ndim == 2:
        vecs = np.asarray(basis, dtype=complex)
    else:
        vecs = np.column_stack([np.asarray(v, dtype=complex).reshape(-1) for v in basis])
    dim = vecs.shape[0]
    if vecs.shape != (dim, dim):
        raise ValidationError(f"a projective POVM needs {dim} basis vectors, got {vecs.shape[1]}")
    res = float(np.max(np.abs(vecs.conj().T @ vecs - np.eye(dim))))
    if res > ORTHONORMAL_TOL:
        raise ValidationError(f"basis is not orthonormal (residual {res:.3e})")
    return validate([np.outer(vecs[:, k], vecs[:, k].conj()) for k in range(dim)], labels)


def computational(n_entities: int, on: Sequence[int] | None = None) -> Povm:
    """Computational-basis projectors on the entities ``on`` (default: all).

    Labels are the bit strings of the measured entities.
    """
    on = list(range(n_entities)) if on is None else [int(e) for e in on]
    effects, labels = [], []
    for bits in range(1 << len(on)):
        label = format(bits, f"0{len(on)}b")
        factors = []
        for k in range(n_entities):
            if k in on:
                b = int(label[on.index(k)])
                factors.append(np.diag([1.0 - b, float(b)]))
            else:
                factors.append(np.eye(2))
        effects.append(qcore.kron_all(factors))
        labels.append(label)
    return validate(effects, labels)


def born_probabilities(povm: Povm, psi) -> np.ndarray:
    """``p_i = <psi|E_i|psi>`` clamped to [0, 1]."""
    amps = np.asarray(psi, dtype=complex).reshape(-1)
    if amps.size != povm.dim:
        raise ValidationError(f"state dim {amps.size} does not match POVM dim {povm.dim}")
    p = np.einsum("i,kij,j->k", amps.conj(), povm.stacked(), amps).real
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True)
class DominanceRule:
    epsilon: float = DEFAULT_EPSILON
    mode: str = "witness"

    def __post_init__(self):
        eps = float(self.epsilon)
        if not 0.0 < eps < 0.5:
            raise ValidationError(f"epsilon must lie in (0, 0.5), got {eps!r}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "epsilon", eps)


def dominant_outcome(probs, rule: DominanceRule | float = DEFAULT_EPSILON) -> int | None:
    """Index ``k`` with ``p_k > eps`` and every other ``p_j <= eps``, else None."""
    eps = rule.epsilon if isinstance(rule, DominanceRule) else float(rule)
    p = np.asarray(probs, dtype=float)
    above = np.flatnonzero(p > eps)
    if above.size != 1:
        return None
    return int(above[0])


@dataclass(frozen=True)
class RecognizedSupport:
    entities: frozenset[int]
    weights: tuple[float, ...]
    delta: float

    def to_dict(self) -> dict:
        return {"entities": sorted(self.entities), "weights": list(self.weights), "delta": self.delta}


def pauli_weights(effect: np.ndarray, n_entities: int) -> np.ndarray:
    """Per-entity squared Pauli-coefficient weight of one effect.

    With ``E = sum_P c_P P`` (normalized so ``c_P = Tr(P E) / d``), returns for
    each entity ``i`` the sum of ``|c_P|^2`` over strings acting non-trivially
    on ``i``.  Parseval turns that sum into
    ``(|E|_HS^2 - |Tr_i E|_HS^2 / 2) / d``, avoiding the 4^n expansion.
    """
    d = effect.shape[0]
    total = float(np.vdot(effect, effect).real)
    t = effect.reshape([2] * (2 * n_entities))
    out = np.empty(n_entities)
    for i in range(n_entities):
        red = np.trace(t, axis1=i, axis2=n_entities + i)
        out[i] = (total - 0.5 * float(np.vdot(red, red).real)) / d
    return out


def recognized_support(povm: Povm, entity_count: int, delta: float = DEFAULT_DELTA) -> RecognizedSupport:
    """Entities on which the POVM's effects carry non-negligible Pauli weight."""
    if povm.dim != 1 << entity_count:
        raise ValidationError(f"POVM dim {povm.dim} is not 2^{entity_count}")
    weights = np.zeros(entity_count)
    scale = 0.0
    for e in povm.effects:
        weights += pauli_weights(e, entity_count)
        scale += float(np.vdot(e, e).real) / povm.dim
    # round-off floor: identity-only effects must give exactly zero weight
    weights[weights <= 1e-12 * max(scale, 1e-300)] = 0.0
    top = float(weights.max()) if weights.size else 0.0
    chosen = frozenset(i for i, w in enumerate(weights) if top > 0 and w > delta * top)
    return RecognizedSupport(chosen, tuple(float(w) for w in weights), float(delta))


def _real_vector(effect: np.ndarray) -> np.ndarray:
    """Coordinates of a hermitian matrix in an orthonormal real basis (HS inner product)."""
    d = effect.shape[0]
    iu = np.triu_indices(d, 1)
    return np.concatenate((np.diag(effect).real, math.sqrt(2) * effect[iu].real, math.sqrt(2) * effect[iu].imag))


class InformationalRank(NamedTuple):
    complete: bool
    rank: int


def _gram_rank(vectors: np.ndarray) -> int:
    if vectors.size == 0:
        return 0
    gram = vectors @ vectors.T
    w = np.linalg.eigvalsh(gram)
    top = float(w[-1])
    if top <= 0.0:
        return 0
    return int(np.sum(w > IC_RANK_TOL * top))


def is_informationally_complete(povm: Povm) -> InformationalRank:
    """Whether the effects span all d^2 hermitian directions (Gram-matrix rank)."""
    rank = _gram_rank(np.stack([_real_vector(e) for e in povm.effects]))
    return InformationalRank(rank == povm.dim**2, rank)


class ICCompletion(NamedTuple):
    povm: Povm
    scale: float
    n_original: int

    def restrict(self) -> list[np.ndarray]:
        """Original effects recovered from the completion."""
        return [e / self.scale for e in self.povm.effects[: self.n_original]]


def _pair_blocks(dim: int):
    """Candidate projector pairs: Hadamard-type then circular-type mixtures."""
    for phase, tag in ((1.0, "h"), (1j, "c")):
        for j in range(dim):
            for k in range(j + 1, dim):
                plus = np.zeros(dim, dtype=complex)
                minus = np.zeros(dim, dtype=complex)
                plus[j] = minus[j] = 1 / math.sqrt(2)
                plus[k] = phase / math.sqrt(2)
                minus[k] = -phase / math.sqrt(2)
                yield tag, (j, k), (plus, minus)


def _unique_label(base: str, taken: set[str]) -> str:
    label = base
    n = 1
    while label in taken:
        label = f"{base}~{n}"
        n += 1
    taken.add(label)
    return label


def ic_completion(povm: Povm) -> ICCompletion:
    """Embed ``povm`` as a rescaled subset of an informationally complete POVM.

    Candidate blocks are taken in a fixed order: the computational basis, then
    for each index pair ``j < k`` the projectors onto ``(|j> +- |k>)/sqrt 2``,
    then onto ``(|j> +- i|k>)/sqrt 2``.  A block is kept when it raises the Gram
    rank.  Kept pair blocks sum to a diagonal matrix; computational projectors
    pad that diagonal up to ``M * I``.  With common weight ``w = 1 / (2 M)``
    the appended effects sum to ``I / 2`` and the original effects are scaled
    by ``c = 1/2``.  Already complete input comes back unchanged with ``c = 1``.
    """
    d = povm.dim
    if is_informationally_complete(povm).complete:
        return ICCompletion(povm, 1.0, len(povm))
    if d > IC_MAX_DIM:
        raise ValidationError(f"ic_completion supports dimensions up to {IC_MAX_DIM}, got {d}")
    basis_rows = [_real_vector(e) for e in povm.effects]
    rank = _gram_rank(np.stack(basis_rows))
    kept: list[tuple[str, np.ndarray]] = []
    coverage = np.zeros(d)
    full_basis = False

    def raises(vectors):
        return _gram_rank(np.stack(basis_rows + [_real_vector(np.outer(v, v.conj())) for v in vectors]))

    comp = [np.eye(d, dtype=complex)[:, k] for k in range(d)]
    if raises(comp) > rank:
        basis_rows += [_real_vector(np.outer(v, v.conj())) for v in comp]
        rank = _gram_rank(np.stack(basis_rows))
        full_basis = True
    for tag, (j, k), vecs in _pair_blocks(d):
        if rank == d * d:
            break
        new_rank = raises(vecs)
        if new_rank > rank:
            basis_rows += [_real_vector(np.outer(v, v.conj())) for v in vecs]
            rank = new_rank
            sign = "+" if tag == "h" else "+i"
            kept.append((f"{tag}{j}{sign}{k}", vecs[0]))
            kept.append((f"{tag}{j}{sign.replace('+', '-')}{k}", vecs[1]))
            coverage[[j, k]] += 1
    if rank < d * d:
        raise NumericError(f"ic_completion reached Gram rank {rank} < {d * d}")
    # every kept block is balanced to a multiple of I with diagonal projectors
    top = float(coverage.max())
    total = top + (1.0 if full_basis else 0.0)
    weight = 1.0 / (2.0 * total)
    scale = 1.0 - weight * total
    taken = set(povm.labels)
    effects = [scale * e for e in povm.effects]
    labels = list(povm.labels)
    for name, v in kept:
        effects.append(weight * np.outer(v, v.conj()))
        labels.append(_unique_label(f"ic:{name}", taken))
    for k in range(d):
        diag_weight = top - coverage[k] + (1.0 if full_basis else 0.0)
        if diag_weight > 0:
            proj = np.zeros((d, d), dtype=complex)
            proj[k, k] = 1.0
            effects.append(weight * diag_weight * proj)
            labels.append(_unique_label(f"ic:z{k}", taken))
    out = validate(effects, labels)
    if not is_informationally_complete(out).complete:
        raise NumericError("ic_completion failed to produce an informationally complete POVM")
    return ICCompletion(out, scale, len(povm))


def sqrt_effect(effect: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (effect + effect.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def is_projective(povm: Povm, tol: float = 1e-9) -> bool:
    return all(float(np.max(np.abs(e @ e - e))) <= tol for e in povm.effects)
