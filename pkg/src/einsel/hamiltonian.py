"""Pauli-string Hamiltonians and their exact bipartite decomposition.

A Hamiltonian is a real-weighted sum of Pauli strings.  Splitting it relative
to a set of entities is exact: every string goes to the side(s) its
non-identity factors touch.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import qcore
from .errors import ParseError, ValidationError

PAULI_LETTERS = ("X", "Y", "Z")

Factors = tuple[tuple[int, str], ...]


def _normalize_factors(factors) -> Factors:
    if isinstance(factors, Mapping):
        items = list(factors.items())
    else:
        items = list(factors)
    seen: dict[int, str] = {}
    for idx, letter in items:
        idx = int(idx)
        letter = str(letter).upper()
        if idx < 0:
            raise ValidationError(f"negative entity index {idx}")
        if letter == "I":
            continue
        if letter not in PAULI_LETTERS:
            raise ValidationError(f"unknown Pauli factor {letter!r}")
        if idx in seen:
            raise ValidationError(f"entity {idx} appears twice in one Pauli string")
        seen[idx] = letter
    return tuple(sorted(seen.items()))


@dataclass(frozen=True)
class PauliTerm:
    """``coefficient`` times a tensor product of X/Y/Z factors.

    ``factors`` maps entity index to letter; unlisted entities carry the
    identity.  An empty factor map is the explicit identity term.
    """

    coefficient: float
    factors: Factors = ()

    def __post_init__(self):
        coef = float(self.coefficient)
        if not math.isfinite(coef) or coef == 0.0:
            raise ValidationError(f"Pauli coefficient must be finite and nonzero, got {coef!r}")
        object.__setattr__(self, "coefficient", coef)
        object.__setattr__(self, "factors", _normalize_factors(self.factors))

    @classmethod
    def parse(cls, text: str) -> "PauliTerm":
        return parse_term(text)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.factors)

    @property
    def is_identity(self) -> bool:
        return not self.factors

    def __str__(self) -> str:
        return format_term(self)


def _term_key(factors: Factors):
    return factors


@dataclass(frozen=True)
class HamiltonianTerms:
    """Canonical Pauli-term list on ``entity_count`` entities.

    ``terms`` holds the non-identity strings sorted by factor signature with
    duplicates merged; the identity part lives in ``offset``.
    """

    entity_count: int
    terms: tuple[PauliTerm, ...] = ()
    offset: float = 0.0

    def __post_init__(self):
        n = int(self.entity_count)
        if n < 1:
            raise ValidationError(f"entity_count must be positive, got {n}")
        object.__setattr__(self, "entity_count", n)
        keys = [t.factors for t in self.terms]
        if any(not k for k in keys):
            raise ValidationError("identity terms belong in offset")
        if keys != sorted(set(keys), key=_term_key):
            raise ValidationError("terms must be canonical: use build()")
        for t in self.terms:
            if t.factors[-1][0] >= n:
                raise ValidationError(f"entity {t.factors[-1][0]} >= {n}")

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def support(self) -> frozenset[int]:
        out: set[int] = set()
        for t in self.terms:
            out |= t.support
        return frozenset(out)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def select(self, predicate) -> "HamiltonianTerms":
        """Sub-list of terms whose support satisfies ``predicate`` (offset dropped)."""
        return HamiltonianTerms(self.entity_count, tuple(t for t in self.terms if predicate(t.support)))

    def restrict(self, entities: Iterable[int]) -> "HamiltonianTerms":
        """Terms supported entirely inside ``entities``."""
        keep = frozenset(entities)
        return self.select(lambda s: s <= keep)

    def scaled(self, factor: float) -> "HamiltonianTerms":
        return build(
            self.entity_count,
            [(factor * t.coefficient, t.factors) for t in self.terms],
            offset=factor * self.offset,
        )

    def __add__(self, other: "HamiltonianTerms") -> "HamiltonianTerms":
        if other.entity_count != self.entity_count:
            raise ValidationError("cannot add Hamiltonians on different registers")
        return build(self.entity_count, list(self.terms) + list(other.terms), offset=self.offset + other.offset)

    def to_dense(self, entities: Sequence[int] | None = None, *, include_offset: bool = True) -> np.ndarray:
        """Dense matrix on the ordered register ``entities`` (default: all).

        Every term must be supported inside ``entities``; the first listed
        entity is the most significant factor.
        """
        order = list(range(self.entity_count)) if entities is None else [int(e) for e in entities]
        if len(set(order)) != len(order):
            raise ValidationError(f"repeated entity in register {order}")
        m = len(order)
        qcore.check_capacity(1 << m)
        pos = {e: p for p, e in enumerate(order)}
        d = 1 << m
        out = np.zeros((d, d), dtype=complex)
        b = np.arange(d)
        for t in self.terms:
            xmask = zmask = 0
            ny = 0
            for idx, letter in t.factors:
                if idx not in pos:
                    raise ValidationError(f"term {format_term(t)} acts outside register {order}")
                bit = 1 << (m - 1 - pos[idx])
                if letter in ("X", "Y"):
                    xmask |= bit
                if letter in ("Z", "Y"):
                    zmask |= bit
                ny += letter == "Y"
            sign = 1 - 2 * (np.bitwise_count(b & zmask).astype(np.int64) & 1)
            out[b ^ xmask, b] += t.coefficient * (1j) ** ny * sign
        if include_offset and self.offset:
            out[b, b] += self.offset
        return out

    def norm(self) -> float:
        """Spectral norm of the non-identity part, realized on its own support."""
        if self.is_zero:
            return 0.0
        return qcore.spectral_norm(self.to_dense(sorted(self.support), include_offset=False))

    def format(self) -> str:
        lines = []
        if self.offset:
            lines.append(format_term(PauliTerm(self.offset)))
        lines.extend(format_term(t) for t in self.terms)
        return "\n".join(lines)


def build(entity_count: int, terms: Iterable, *, offset: float = 0.0) -> HamiltonianTerms:
    """Canonical Hamiltonian from a list of terms.

    Items may be ``PauliTerm`` objects, term strings such as ``"0.5 * Z0 Z1"``,
    or ``(coefficient, factors)`` pairs.  Duplicate strings are merged by adding
    coefficients and exact zeros are dropped.

    >>> build(2, ["0.5 * Z0 Z1", "0.5 * Z0 Z1"]).format()
    '1.0 * Z0 Z1'
    """
    n = int(entity_count)
    merged: dict[Factors, float] = {}
    total_offset = float(offset)
    for k, item in enumerate(terms):
        if isinstance(item, str):
            term = parse_term(item)
        elif isinstance(item, PauliTerm):
            term = item
        else:
            coef, factors = item
            if float(coef) == 0.0:
                continue
            term = PauliTerm(coef, factors)
        for idx, _ in term.factors:
            if idx >= n:
                raise ValidationError(f"terms[{k}]: entity {idx} ≥ {n}")
        if term.is_identity:
            total_offset += term.coefficient
        else:
            merged[term.factors] = merged.get(term.factors, 0.0) + term.coefficient
    out = tuple(PauliTerm(c, f) for f, c in sorted(merged.items(), key=lambda kv: _term_key(kv[0])) if c != 0.0)
    return HamiltonianTerms(n, out, total_offset)


def zero(entity_count: int) -> HamiltonianTerms:
    return HamiltonianTerms(entity_count)


@dataclass(frozen=True)
class BipartiteSplit:
    """Self and interaction parts of a Hamiltonian relative to ``system``."""

    system: frozenset[int]
    h_self_s: HamiltonianTerms
    h_self_e: HamiltonianTerms
    h_int: HamiltonianTerms
    offset: float = 0.0
    norms: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    @property
    def environment(self) -> frozenset[int]:
        return frozenset(range(self.h_int.entity_count)) - self.system


def decompose_bipartite(h: HamiltonianTerms, system: Iterable[int]) -> BipartiteSplit:
    """Route each Pauli string of ``h`` by the support of its factors.

    Strings inside ``system`` form H_S, strings inside the complement form
    H_E, and strings touching both form the interaction.  The identity part is
    carried separately and never enters a norm.
    """
    s = frozenset(int(i) for i in system)
    everything = frozenset(range(h.entity_count))
    if not s:
        raise ValidationError("system must be nonempty")
    if not s <= everything:
        raise ValidationError(f"system {sorted(s)} not inside 0..{h.entity_count - 1}")
    if s == everything:
        raise ValidationError("system must be a proper subset of the entities")
    env = everything - s
    h_s = h.select(lambda sup: sup <= s)
    h_e = h.select(lambda sup: sup <= env)
    h_i = h.select(lambda sup: bool(sup & s) and bool(sup & env))
    return BipartiteSplit(s, h_s, h_e, h_i, h.offset, (h_s.norm(), h_e.norm(), h_i.norm()))


def pairwise_interaction(h: HamiltonianTerms, i: int, j: int) -> HamiltonianTerms:
    """Terms whose support is exactly ``{i, j}``."""
    if i == j:
        raise ValidationError("pairwise_interaction needs two distinct entities")
    pair = frozenset((int(i), int(j)))
    return h.select(lambda sup: sup == pair)


def mean_pair_coupling(h: HamiltonianTerms, pairs: Iterable[tuple[int, int]]) -> float:
    """Mean spectral norm of the pairwise parts over ``pairs``."""
    norms = [pairwise_interaction(h, i, j).norm() for i, j in pairs]
    return float(np.mean(norms)) if norms else 0.0


_FACTOR_RE = re.compile(r"^([XYZI])(\d+)$")


def parse_term(text: str, *, line: int | None = None) -> PauliTerm:
    """Parse ``<coeff> * <P><idx> [<P><idx> ...]``; ``<coeff> * I`` is the identity."""
    body = text.split("#", 1)[0].strip()
    if "*" not in body:
        raise ParseError(f"expected '<coeff> * <factors>', got {text.strip()!r}", line)
    coef_text, factor_text = body.split("*", 1)
    try:
        coef = float(coef_text.strip())
    except ValueError:
        raise ParseError(f"bad coefficient {coef_text.strip()!r}", line) from None
    if not math.isfinite(coef):
        raise ParseError(f"coefficient must be finite, got {coef_text.strip()!r}", line)
    tokens = factor_text.split()
    if not tokens:
        raise ParseError("missing Pauli factors", line)
    factors = []
    for tok in tokens:
        if tok.upper() == "I":
            continue
        m = _FACTOR_RE.match(tok.upper())
        if m is None:
            raise ParseError(f"bad Pauli factor {tok!r}", line)
        if m.group(1) == "I":
            continue
        factors.append((int(m.group(2)), m.group(1)))
    try:
        return PauliTerm(coef, factors)
    except ValidationError as exc:
        raise ParseError(str(exc), line) from None


def format_term(term: PauliTerm) -> str:
    if term.is_identity:
        return f"{term.coefficient!r} * I"
    return f"{term.coefficient!r} * " + " ".join(f"{p}{i}" for i, p in term.factors)


def parse_terms(text: str, entity_count: int, *, first_line: int = 1) -> HamiltonianTerms:
    """Parse one term per line (blank lines and ``#`` comments skipped)."""
    terms = []
    for k, raw in enumerate(text.splitlines()):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        term_line = first_line + k
        coef_text = body.split("*", 1)[0].strip()
        try:
            if float(coef_text) == 0.0:
                continue
        except ValueError:
            pass
        terms.append(parse_term(body, line=term_line))
    return build(entity_count, terms)
