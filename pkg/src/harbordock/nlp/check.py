"""Finite-difference verification of problem derivatives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .problem import NlpProblem


@dataclass
class DerivativeReport:
    objective_error: float
    eq_error: float
    ineq_error: float
    sparsity_ok: bool = True
    details: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.objective_error, self.eq_error, self.ineq_error)


def _relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, float)
    numeric = np.asarray(numeric, float)
    if analytic.size == 0:
        return 0.0
    scale = max(1.0, np.max(np.abs(numeric)), np.max(np.abs(analytic)))
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _fd_jacobian(fun, x, h, columns):
    cols = []
    for j in columns:
        step = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        cols.append((np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2.0 * step))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def check_derivatives(problem: NlpProblem, x, seed: int = 0, n_columns: int | None = None,
                      step: float = 1e-6) -> DerivativeReport:
    """Compare analytic gradients/Jacobians with central differences at ``x``.

    Errors are relative to ``max(1, |entries|)`` per block.  ``n_columns``
    limits the check to a seeded random subset of variables (all by default).
    Declared sparsity patterns are checked to cover every numerically
    nonzero Jacobian entry.
    """
    x = np.asarray(x, dtype=float)
    n = problem.n_vars
    rng = np.random.default_rng(seed)
    if n_columns is None or n_columns >= n:
        columns = np.arange(n)
    else:
        columns = np.sort(rng.choice(n, size=n_columns, replace=False))

    _, g = problem.objective(x)
    fd_g = _fd_jacobian(lambda y: problem.objective(y)[0], x, step, columns)
    obj_err = _relative_error(np.asarray(g)[columns], fd_g.ravel())

    sparsity_ok = True
    errs = {}
    for name, evaluator, pattern, count in (
        ("eq", problem.eval_eq, problem.eq_sparsity, problem.n_eq),
        ("ineq", problem.eval_ineq, problem.in_sparsity, problem.n_ineq),
    ):
        if count == 0:
            errs[name] = 0.0
            continue
        _, J = evaluator(x)
        J = sp.csc_matrix(J)
        fd = _fd_jacobian(lambda y: evaluator(y)[0], x, step, columns)
        dense = J[:, columns].toarray()
        errs[name] = _relative_error(dense, fd)
        if pattern is not None:
            declared = sp.csc_matrix(pattern)[:, columns].toarray() != 0
            numeric_nz = np.abs(fd) > 1e-7 * max(1.0, np.max(np.abs(fd)))
            if np.any(numeric_nz & ~declared):
                sparsity_ok = False
    return DerivativeReport(obj_err, errs["eq"], errs["ineq"], sparsity_ok,
                            {"columns": len(columns)})
