"""Einselection on small registers of two-level entities, and the records an observer keeps."""

from .errors import CapacityError, EinselError, NumericError, ParseError, ValidationError
from .hamiltonian import HamiltonianTerms, PauliTerm, build, parse_terms
from .qcore import DensityOperator, Operator, StateVector, evolve, partial_trace
from .povm import DominanceRule, Povm, validate
from .observer import ObservationSchedule, RecordTrace, run_trajectory
from .einselect import check_conditions, exclusion_check, halo_scan, pointer_basis
from .vmx import infer_fsm, predict_transitions

__all__ = [
    "CapacityError", "EinselError", "NumericError", "ParseError", "ValidationError",
    "HamiltonianTerms", "PauliTerm", "build", "parse_terms",
    "DensityOperator", "Operator", "StateVector", "evolve", "partial_trace",
    "DominanceRule", "Povm", "validate",
    "ObservationSchedule", "RecordTrace", "run_trajectory",
    "check_conditions", "exclusion_check", "halo_scan", "pointer_basis",
    "infer_fsm", "predict_transitions",
]
