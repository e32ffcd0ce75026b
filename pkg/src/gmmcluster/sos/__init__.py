"""Sum-of-squares relaxations: polynomials, systems, encoding and solving."""

from .polynomial import MonomialBasis, Polynomial
from .pseudo import PseudoExpectation, SatisfactionReport, check_satisfaction, second_moment
from .sdp import SDP, DegreeOverflowError, EncodeOptions, encode
from .solver import FEASIBLE, INDETERMINATE, INFEASIBLE, SolveOutcome, SolverSettings, solve, solve_sdp
from .system import MatrixSosConstraint, PolynomialSystem

__all__ = [
    "MonomialBasis", "Polynomial", "PseudoExpectation", "SatisfactionReport", "check_satisfaction",
    "second_moment", "SDP", "DegreeOverflowError", "EncodeOptions", "encode", "FEASIBLE",
    "INDETERMINATE", "INFEASIBLE", "SolveOutcome", "SolverSettings", "solve", "solve_sdp",
    "MatrixSosConstraint", "PolynomialSystem",
]
