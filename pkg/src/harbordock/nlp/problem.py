"""Problem, option and result containers for the SQP solver."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

ObjectiveFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]
ConstraintFn = Callable[[np.ndarray], "tuple[np.ndarray, sp.spmatrix]"]
HessianFn = Callable[[np.ndarray, np.ndarray, np.ndarray], sp.spmatrix]


class NlpError(RuntimeError):
    pass


class CallbackFailure(NlpError):
    """A user callback returned a non-finite value."""


class Status(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


@dataclass
class NlpProblem:
    """Sparse nonlinear program.

    minimize f(x)  subject to  c_eq(x) = 0,  c_in(x) <= 0,  lower <= x <= upper.

    Constraint callbacks return ``(values, jacobian)`` with a scipy sparse
    Jacobian.  ``eq_sparsity`` / ``in_sparsity`` declare the structural
    nonzeros (boolean sparse matrices); they are only used for checking.
    ``hessian`` (optional) returns a positive semidefinite model of the
    Lagrangian Hessian for multipliers ``(lam_eq, lam_in)``.
    """

    n_vars: int
    objective: ObjectiveFn
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    eq_constraints: Optional[ConstraintFn] = None
    ineq_constraints: Optional[ConstraintFn] = None
    n_eq: int = 0
    n_ineq: int = 0
    eq_sparsity: Optional[sp.spmatrix] = None
    in_sparsity: Optional[sp.spmatrix] = None
    hessian: Optional[HessianFn] = None

    def __post_init__(self):
        n = self.n_vars
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors must have length n_vars")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def eval_eq(self, x):
        if self.eq_constraints is None or self.n_eq == 0:
            return np.zeros(0), sp.csr_matrix((0, self.n_vars))
        c, J = self.eq_constraints(x)
        return np.asarray(c, float), sp.csr_matrix(J)

    def eval_ineq(self, x):
        if self.ineq_constraints is None or self.n_ineq == 0:
            return np.zeros(0), sp.csr_matrix((0, self.n_vars))
        c, J = self.ineq_constraints(x)
        return np.asarray(c, float), sp.csr_matrix(J)


@dataclass
class SolveOptions:
    max_iterations: int = 200
    kkt_tolerance: float = 1e-6
    constraint_tolerance: float = 1e-6
    hessian_mode: str = "bfgs"  # or "gauss-newton" (uses NlpProblem.hessian)
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-10
    penalty_margin: float = 1.0
    second_order_correction: bool = True
    qp_max_iterations: int = 200
    # proximal term rho*|d|^2/2 added to the QP Hessian; rho shrinks after full
    # steps, grows after short steps or QP failures
    proximal_initial: float = 0.0
    proximal_min: float = 1e-10
    proximal_max: float = 1e8
    record_history: bool = False

    def __post_init__(self):
        if self.kkt_tolerance <= 0 or self.constraint_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.hessian_mode not in ("bfgs", "gauss-newton"):
            raise ValueError(f"unknown hessian_mode {self.hessian_mode!r}")


@dataclass
class SolveResult:
    x_star: np.ndarray
    lam_eq: np.ndarray
    lam_in: np.ndarray
    lam_bounds: np.ndarray
    status: Status
    iterations: int
    objective: float
    primal_infeasibility: float
    kkt_residual: float
    solve_wall_time: float
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def multipliers(self):
        return self.lam_eq, self.lam_in, self.lam_bounds
