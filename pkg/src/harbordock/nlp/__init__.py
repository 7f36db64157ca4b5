from .check import DerivativeReport, check_derivatives
from .problem import (CallbackFailure, NlpError, NlpProblem, SolveOptions, SolveResult,
                      Status)
from .qp import QpResult, solve_qp
from .sqp import kkt_residual, solve

__all__ = [
    "CallbackFailure", "DerivativeReport", "NlpError", "NlpProblem", "QpResult",
    "SolveOptions", "SolveResult", "Status", "check_derivatives", "kkt_residual",
    "solve", "solve_qp",
]
