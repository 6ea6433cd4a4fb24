"""Stochastic finite-state machines over observation records."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .hamiltonian import HamiltonianTerms
from .observer import ObservationSchedule, RecordTrace
from .povm import DominanceRule, Povm, born_probabilities, dominant_outcome
from . import qcore

GAP_POLICIES = ("break", "bridge")


@dataclass(frozen=True, eq=False)
class StochasticFsm:
    states: tuple[str, ...]
    transition_counts: np.ndarray
    transition_probs: np.ndarray
    runs: int
    alpha: float = 0.0

    @property
    def row_totals(self) -> np.ndarray:
        return self.transition_counts.sum(axis=1)

    @property
    def unknown_rows(self) -> tuple[str, ...]:
        """States never left within a run (no outgoing counts)."""
        return tuple(s for s, n in zip(self.states, self.row_totals) if n == 0)

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "counts": self.transition_counts.tolist(),
            "probs": self.transition_probs.tolist(),
            "runs": self.runs,
            "alpha": self.alpha,
            "unknown_rows": list(self.unknown_rows),
        }


def _runs(trace: RecordTrace, gap_policy: str) -> list[list[str]]:
    if gap_policy == "bridge":
        seq = [o for o in trace.outcomes if o is not None]
        return [seq] if seq else []
    runs, cur = [], []
    for o in trace.outcomes:
        if o is None:
            if cur:
                runs.append(cur)
            cur = []
        else:
            cur.append(o)
    if cur:
        runs.append(cur)
    return runs


def infer_fsm(traces: Iterable[RecordTrace] | RecordTrace, gap_policy: str = "break", alpha: float = 0.0) -> StochasticFsm:
    """Count transitions between consecutive records and row-normalize.

    With ``gap_policy="break"`` an empty record ends the current run; with
    ``"bridge"`` empty records are skipped.  Transitions never cross trace
    boundaries.  ``alpha`` adds Laplace smoothing to non-empty rows.
    """
    if isinstance(traces, RecordTrace):
        traces = [traces]
    traces = list(traces)
    if not traces:
        raise ValidationError("infer_fsm needs at least one trace")
    if gap_policy not in GAP_POLICIES:
        raise ValidationError(f"gap_policy must be one of {GAP_POLICIES}, got {gap_policy!r}")
    if alpha < 0:
        raise ValidationError("alpha must be nonnegative")
    all_runs = [run for t in traces for run in _runs(t, gap_policy)]
    states = tuple(sorted({o for run in all_runs for o in run}))
    index = {s: i for i, s in enumerate(states)}
    counts = np.zeros((len(states), len(states)), dtype=np.int64)
    for run in all_runs:
        for a, b in zip(run, run[1:]):
            counts[index[a], index[b]] += 1
    probs = _normalize(counts.astype(float), alpha)
    return StochasticFsm(states, counts, probs, len(all_runs), float(alpha))


def _normalize(weights: np.ndarray, alpha: float = 0.0) -> np.ndarray:
    out = np.zeros_like(weights, dtype=float)
    k = weights.shape[1]
    for i, row in enumerate(weights):
        total = row.sum()
        if total > 0:
            out[i] = (row + alpha) / (total + alpha * k)
    return out


@dataclass(frozen=True, eq=False)
class PredictedTransitions:
    """Conditional law of the next record given the current one.

    ``expected_counts[a, b]`` is the expected number of ``a -> b`` transitions
    in one trace; ``probs`` is its row normalization.
    """

    states: tuple[str, ...]
    probs: np.ndarray
    expected_counts: np.ndarray
    gap_policy: str = "break"

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "probs": self.probs.tolist(),
            "expected_counts": self.expected_counts.tolist(),
            "gap_policy": self.gap_policy,
        }


def record_probabilities(psi0, h: HamiltonianTerms, schedule: ObservationSchedule, povm: Povm, rule: DominanceRule):
    """Dominant outcome (or None) and its recording probability at each sample."""
    prop = qcore.Propagator(h.to_dense())
    coeffs = prop.coefficients(psi0)
    dominant: list[int | None] = []
    q = np.zeros(schedule.steps)
    for i, t in enumerate(schedule.times()):
        p = born_probabilities(povm, prop.at(coeffs, t))
        k = dominant_outcome(p, rule)
        dominant.append(k)
        if k is not None:
            q[i] = p[k]
    return dominant, q


def predict_transitions(
    psi0,
    h: HamiltonianTerms,
    schedule: ObservationSchedule,
    povm: Povm,
    rule: DominanceRule,
    gap_policy: str = "break",
) -> PredictedTransitions:
    """Exact transition law of witness-mode records along the trajectory.

    A sample at ``t_i`` yields a record of its dominant outcome ``D_i`` with
    probability ``q_i = p_{D_i}(t_i)`` (zero when nothing dominates),
    independently across samples.  Under ``break`` the expected count of
    ``a -> b`` is ``sum_i [D_i=a][D_{i+1}=b] q_i q_{i+1}``; under ``bridge``
    the next record may come after any number of empty samples.
    """
    if rule.mode != "witness":
        raise ValidationError("predict_transitions requires witness mode")
    if gap_policy not in GAP_POLICIES:
        raise ValidationError(f"gap_policy must be one of {GAP_POLICIES}, got {gap_policy!r}")
    dominant, q = record_probabilities(psi0, h, schedule, povm, rule)
    seen = sorted({povm.labels[k] for k, qi in zip(dominant, q) if k is not None and qi > 0})
    index = {s: i for i, s in enumerate(seen)}
    k_states = len(seen)
    lab = [None if k is None or q[i] == 0 else index[povm.labels[k]] for i, k in enumerate(dominant)]
    counts = np.zeros((k_states, k_states))
    if gap_policy == "break":
        for i in range(len(lab) - 1):
            a, b = lab[i], lab[i + 1]
            if a is not None and b is not None:
                counts[a, b] += q[i] * q[i + 1]
    else:
        # first_after[b]: probability that the first record at or after j is b
        first_after = np.zeros(k_states)
        for i in range(len(lab) - 1, -1, -1):
            a = lab[i]
            if a is not None:
                counts[a] += q[i] * first_after
                first_after = (1.0 - q[i]) * first_after
                first_after[a] += q[i]
    return PredictedTransitions(tuple(seen), _normalize(counts), counts, gap_policy)


@dataclass(frozen=True, eq=False)
class FsmDiff:
    states: tuple[str, ...]
    deviation: np.ndarray
    std_error: np.ndarray
    row_counts: np.ndarray

    @property
    def max_deviation(self) -> float:
        observed = self.row_counts > 0
        if not observed.any():
            return 0.0
        return float(self.deviation[observed].max())

    def within(self, sigmas: float = 3.0, floor: float = 1e-12) -> bool:
        """Every observed edge deviates by at most ``sigmas`` standard errors."""
        observed = self.row_counts > 0
        bound = sigmas * self.std_error + floor
        return bool(np.all(self.deviation[observed] <= bound[observed]))

    def to_dict(self, sigmas: float = 3.0) -> dict:
        return {
            "states": list(self.states),
            "deviation": self.deviation.tolist(),
            "std_error": self.std_error.tolist(),
            "row_counts": self.row_counts.tolist(),
            "max_deviation": self.max_deviation,
            "within_3_sigma": self.within(sigmas),
        }


def fsm_diff(empirical: StochasticFsm, predicted: PredictedTransitions | np.ndarray, states: Sequence[str] | None = None) -> FsmDiff:
    """Per-edge ``|p_hat - p|`` with binomial standard error ``sqrt(p(1-p)/n_row)``.

    Rows with no empirical transitions get deviation 0 and infinite error.
    """
    if isinstance(predicted, PredictedTransitions):
        pstates, pmat = predicted.states, predicted.probs
    else:
        pstates = tuple(states) if states is not None else empirical.states
        pmat = np.asarray(predicted, dtype=float)
    if set(pstates) != set(empirical.states):
        raise ValidationError(f"label mismatch: empirical {list(empirical.states)} vs predicted {list(pstates)}")
    order = [pstates.index(s) for s in empirical.states]
    p = pmat[np.ix_(order, order)]
    n_row = empirical.row_totals
    dev = np.abs(empirical.transition_probs - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(p * (1.0 - p) / n_row[:, None])
    se[n_row == 0] = math.inf
    dev[n_row == 0] = 0.0
    return FsmDiff(empirical.states, dev, se, n_row.copy())


def export_graph(fsm: StochasticFsm) -> str:
    """One ``a -> b [p=..., n=...]`` line per edge; states sorted lexicographically.

    A state without outgoing edges appears as a bare node line.
    """
    lines = []
    index = {s: i for i, s in enumerate(fsm.states)}
    for a in sorted(fsm.states):
        i = index[a]
        edges = [
            b for b in sorted(fsm.states)
            if fsm.transition_counts[i, index[b]] > 0 or fsm.transition_probs[i, index[b]] > 0
        ]
        if not edges:
            lines.append(a)
            continue
        for b in edges:
            j = index[b]
            lines.append(f"{a} -> {b} [p={fsm.transition_probs[i, j]:.6f}, n={fsm.transition_counts[i, j]}]")
    return "\n".join(lines) + ("\n" if lines else "")
