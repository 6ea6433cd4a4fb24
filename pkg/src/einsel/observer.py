"""Observation of a unitarily evolving register through a POVM.

At each sample time the observer's detector registers one outcome drawn from
the Born probabilities.  A record is written only when the registered outcome
is the dominant component under the observer's threshold; otherwise the
observer records nothing for that sample.  In ``witness`` mode the register
is never disturbed.  In ``projective`` mode a measurement (and state update)
happens only while some component dominates.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import qcore
from .errors import NumericError, ParseError, ValidationError
from .hamiltonian import HamiltonianTerms
from .povm import DominanceRule, Povm, born_probabilities, dominant_outcome, sqrt_effect


@dataclass(frozen=True)
class ObservationSchedule:
    t0: float = 0.0
    dt: float = 1.0
    steps: int = 1

    def __post_init__(self):
        t0, dt = float(self.t0), float(self.dt)
        if not (math.isfinite(t0) and math.isfinite(dt)):
            raise ValidationError("schedule times must be finite")
        if dt <= 0.0:
            raise ValidationError(f"schedule dt must be positive, got {dt!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError(f"schedule steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "steps", int(self.steps))

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps)


@dataclass(frozen=True)
class Record:
    time: float
    outcome: str | None
    p_max: float
    probs: tuple[float, ...] | None = None


@dataclass(frozen=True)
class RecordTrace:
    records: tuple[Record, ...]
    scenario_id: str = "anonymous"
    seed: int = 0
    epsilon: float = 0.01
    mode: str = "witness"
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        times = [r.time for r in self.records]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("record times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def outcomes(self) -> list[str | None]:
        return [r.outcome for r in self.records]

    @property
    def none_count(self) -> int:
        return sum(r.outcome is None for r in self.records)


def _rng(seed: int) -> np.random.Generator:
    # Philox is counter-based, so a seed fixes the stream on every platform
    return np.random.Generator(np.random.Philox(int(seed)))


def _draw(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(k, probs.size - 1)


def run_trajectory(
    psi0,
    h: HamiltonianTerms,
    schedule: ObservationSchedule,
    povm: Povm,
    rule: DominanceRule,
    seed: int = 0,
    *,
    scenario_id: str = "anonymous",
    keep_probs: bool = True,
) -> RecordTrace:
    """Observe ``psi0`` evolving under ``h`` at the schedule's sample times.

    One uniform variate is drawn per sample time from a Philox stream seeded
    with ``seed``.  It picks the registered outcome from the Born
    probabilities; the outcome is recorded only if it is the dominant one.

    In witness mode the state at ``t_i`` is ``exp(-i h t_i) psi0``.  In
    projective mode the state is carried forward segment by segment and, when
    a component dominates, replaced by ``sqrt(E_k) psi / |.|`` for the
    registered outcome ``k``.
    """
    amps = np.asarray(psi0, dtype=complex).reshape(-1)
    if amps.size != povm.dim:
        raise ValidationError(f"state dim {amps.size} does not match POVM dim {povm.dim}")
    if h.entity_count != qcore.entity_count(povm.dim):
        raise ValidationError(f"Hamiltonian has {h.entity_count} entities, POVM acts on {povm.n_entities}")
    prop = qcore.Propagator(h.to_dense())
    rng = _rng(seed)
    times = schedule.times()
    coeffs = prop.coefficients(amps)
    roots = [sqrt_effect(e) for e in povm.effects] if rule.mode == "projective" else None
    state = amps
    last_t = schedule.t0
    records = []
    for t in times:
        if rule.mode == "witness":
            psi = prop.at(coeffs, t)
        else:
            psi = prop.apply(state, t - last_t) if t != last_t else state
        probs = born_probabilities(povm, psi)
        u = rng.random()
        k = dominant_outcome(probs, rule)
        outcome = None
        if k is not None:
            drawn = _draw(probs, u)
            if drawn == k:
                outcome = povm.labels[k]
            if rule.mode == "projective":
                post = roots[drawn] @ psi
                nrm = np.linalg.norm(post)
                if nrm == 0.0:
                    raise NumericError("measurement update produced the zero vector")
                psi = post / nrm
        state, last_t = psi, t
        records.append(
            Record(float(t), outcome, float(probs.max()), tuple(float(p) for p in probs) if keep_probs else None)
        )
    return RecordTrace(tuple(records), scenario_id, int(seed), rule.epsilon, rule.mode, povm.labels)


def einselected_state(povm: Povm, k: int, psi) -> tuple[qcore.StateVector, float]:
    """Normalized ``sqrt(E_k)|psi>`` and its fidelity ``|<out|psi>|^2``."""
    amps = np.asarray(psi, dtype=complex).reshape(-1)
    out = sqrt_effect(povm.effects[k]) @ amps
    nrm = np.linalg.norm(out)
    if nrm <= 1e-15:
        raise NumericError(f"effect {povm.labels[k]!r} annihilates the state")
    out = out / nrm
    return qcore.StateVector(out), float(abs(np.vdot(out, amps)) ** 2)


def recheck_dominance(trace: RecordTrace) -> list[int]:
    """Indices of records whose outcome breaks the dominance rule post hoc."""
    bad = []
    for i, r in enumerate(trace.records):
        if r.outcome is None:
            continue
        if r.probs is None:
            raise ValidationError("trace carries no probabilities to re-check")
        k = trace.labels.index(r.outcome)
        if dominant_outcome(r.probs, trace.epsilon) != k:
            bad.append(i)
    return bad


def format_trace(trace: RecordTrace) -> str:
    """CSV serialization with a ``# scenario=...`` header line."""
    buf = io.StringIO()
    buf.write(f"# scenario={trace.scenario_id} seed={trace.seed} epsilon={trace.epsilon!r} mode={trace.mode}\n")
    buf.write("t,outcome,p_max\n")
    for r in trace.records:
        label = "-" if r.outcome is None else r.outcome
        buf.write(f"{r.time:.17g},{label},{r.p_max:.17g}\n")
    return buf.getvalue()


def parse_trace(text: str) -> RecordTrace:
    """Inverse of :func:`format_trace` (probabilities are not stored)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParseError("trace must start with a '# scenario=...' header", 1)
    meta = {}
    for tok in lines[0][1:].split():
        if "=" not in tok:
            raise ParseError(f"bad header field {tok!r}", 1)
        key, value = tok.split("=", 1)
        meta[key] = value
    missing = {"scenario", "seed", "epsilon", "mode"} - meta.keys()
    if missing:
        raise ParseError(f"header lacks {sorted(missing)}", 1)
    records = []
    start = 1
    if len(lines) > 1 and lines[1].strip() == "t,outcome,p_max":
        start = 2
    for n, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 't,outcome,p_max', got {line!r}", n)
        try:
            t, p = float(parts[0]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad number in {line!r}", n) from None
        label = None if parts[1] == "-" else parts[1]
        records.append(Record(t, label, p))
    try:
        return RecordTrace(
            tuple(records), meta["scenario"], int(meta["seed"]), float(meta["epsilon"]), meta["mode"]
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from None
