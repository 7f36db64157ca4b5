"""Line-search SQP with an L1 exact-penalty merit function."""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp

from .problem import CallbackFailure, NlpProblem, SolveOptions, SolveResult, Status
from .qp import FREE, QpError, initial_working_set, solve_qp


class _Evaluator:
    def __init__(self, problem: NlpProblem):
        self.p = problem

    def __call__(self, x):
        f, g = self.p.objective(x)
        f = float(f)
        g = np.asarray(g, dtype=float)
        c_eq, J_eq = self.p.eval_eq(x)
        c_in, J_in = self.p.eval_ineq(x)
        if not (np.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(c_eq))
                and np.all(np.isfinite(c_in)) and np.all(np.isfinite(J_eq.data))
                and np.all(np.isfinite(J_in.data))):
            raise CallbackFailure("non-finite value returned by a problem callback")
        return f, g, c_eq, J_eq, c_in, J_in


def _violation(c_eq, c_in, w_eq=None, w_in=None) -> float:
    """Weighted L1 constraint violation (unit weights by default)."""
    v_eq = np.abs(c_eq)
    v_in = np.maximum(c_in, 0.0)
    if w_eq is not None:
        v_eq = w_eq * v_eq
        v_in = w_in * v_in
    return float(np.sum(v_eq) + np.sum(v_in))


def _infeasibility(c_eq, c_in) -> float:
    return max(np.max(np.abs(c_eq), initial=0.0), np.max(c_in, initial=0.0))


def kkt_residual(x, g, c_in, J_eq, J_in, lam_eq, lam_in, lower, upper, bound_tol=1e-9):
    """Scaled first-order optimality error (stationarity, complementarity, dual sign).

    Stationarity and complementarity are divided by ``max(1, |grad f|_inf)``.
    """
    grad_l = g + J_eq.T @ lam_eq + J_in.T @ lam_in
    at_low = np.isfinite(lower) & (x <= lower + bound_tol)
    at_up = np.isfinite(upper) & (x >= upper - bound_tol)
    stat = np.abs(grad_l)
    stat = np.where(at_low, np.maximum(-grad_l, 0.0), stat)
    stat = np.where(at_up, np.maximum(grad_l, 0.0), stat)
    stat = np.where(at_low & at_up, 0.0, stat)
    scale = max(1.0, np.max(np.abs(g), initial=0.0))
    comp = np.max(np.abs(lam_in * np.minimum(c_in, 0.0)), initial=0.0)
    dual = np.max(np.maximum(-lam_in, 0.0), initial=0.0)
    return max(np.max(stat, initial=0.0) / scale, comp / scale, dual)


def _bfgs_update(B, s, y):
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if sBs <= 1e-16:
        return B
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    return B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy


def solve(problem: NlpProblem, x0, options: SolveOptions | None = None) -> SolveResult:
    """Minimize ``problem`` from ``x0`` by sequential quadratic programming."""
    opts = options or SolveOptions()
    t_start = time.perf_counter()
    n = problem.n_vars
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({n},)")
    lower, upper = problem.lower, problem.upper
    x = np.clip(x, lower, upper)
    evaluate = _Evaluator(problem)
    if opts.hessian_mode == "gauss-newton" and problem.hessian is None:
        raise ValueError("hessian_mode 'gauss-newton' needs NlpProblem.hessian")

    f, g, c_eq, J_eq, c_in, J_in = evaluate(x)
    lam_eq = np.zeros(len(c_eq))
    lam_in = np.zeros(len(c_in))
    z = np.zeros(n)
    B = np.eye(n) if opts.hessian_mode == "bfgs" else None
    # per-constraint penalty weights of the L1 merit
    mu_eq = np.zeros(len(c_eq))
    mu_in = np.zeros(len(c_in))
    rho = opts.proximal_initial
    active, bstatus = initial_working_set(c_in, x, lower, upper)
    history = []
    status = Status.MAX_ITERATIONS
    kkt = np.inf
    iteration = 0

    for iteration in range(opts.max_iterations + 1):
        infeas = _infeasibility(c_eq, c_in)
        if iteration > 0:
            kkt = kkt_residual(x, g, c_in, J_eq, J_in, lam_eq, lam_in, lower, upper)
            if kkt <= opts.kkt_tolerance and infeas <= opts.constraint_tolerance:
                status = Status.CONVERGED
                break
        if iteration == opts.max_iterations:
            break

        if B is not None:
            H0 = sp.csr_matrix(B)
        else:
            H0 = problem.hessian(x, lam_eq, lam_in)
        qp = None
        while qp is None:
            H = H0 + rho * sp.identity(n, format="csr") if rho > 0 else H0
            try:
                qp = solve_qp(H, g, J_eq, -c_eq, J_in, -c_in, lower - x, upper - x,
                              active=active, bound_status=bstatus,
                              max_iterations=opts.qp_max_iterations)
            except QpError:
                qp = None
            if qp is None or not qp.optimal:
                if rho >= opts.proximal_max:
                    break
                rho = min(opts.proximal_max, max(10.0 * rho, 1e-4))
                qp = None
        if qp is None:
            status = Status.LINE_SEARCH_FAILURE
            break
        d = qp.d
        lam_eq_qp, lam_in_qp = qp.lam_eq, np.maximum(qp.lam_in, 0.0)

        # weights must dominate the multipliers; relax toward them otherwise
        need_eq = np.abs(lam_eq_qp) + opts.penalty_margin
        need_in = lam_in_qp + opts.penalty_margin
        mu_eq = np.maximum(need_eq, 0.5 * (mu_eq + need_eq))
        mu_in = np.maximum(need_in, 0.5 * (mu_in + need_in))
        viol0 = _violation(c_eq, c_in, mu_eq, mu_in)
        phi0 = f + viol0
        dphi = float(g @ d) - viol0
        step_norm = float(np.max(np.abs(d), initial=0.0))

        alpha = 1.0
        accepted = None
        while alpha >= opts.min_step:
            x_try = np.clip(x + alpha * d, lower, upper)
            ev = evaluate(x_try)
            phi = ev[0] + _violation(ev[2], ev[4], mu_eq, mu_in)
            if phi <= phi0 + opts.armijo * alpha * min(dphi, 0.0) or step_norm == 0.0:
                accepted = (x_try, ev, phi)
                break
            if alpha == 1.0 and opts.second_order_correction and (len(c_eq) or len(c_in)):
                soc = _second_order_correction(H, g, J_eq, J_in, ev, d, x, lower, upper, qp, opts)
                if soc is not None:
                    x_soc = np.clip(x + soc, lower, upper)
                    ev_soc = evaluate(x_soc)
                    phi_soc = ev_soc[0] + _violation(ev_soc[2], ev_soc[4], mu_eq, mu_in)
                    if phi_soc <= phi0 + opts.armijo * min(dphi, 0.0):
                        accepted = (x_soc, ev_soc, phi_soc)
                        break
            alpha *= opts.backtrack
        if accepted is None:
            status = Status.LINE_SEARCH_FAILURE
            break

        x_new, ev_new, phi_new = accepted
        if alpha == 1.0:
            rho = rho * 0.25 if rho * 0.25 >= opts.proximal_min else 0.0
        elif rho > 0 or alpha < 0.1:
            rho = min(opts.proximal_max, max(4.0 * rho, 1e-4))
        if B is not None:
            grad_l_old = g + J_eq.T @ lam_eq_qp + J_in.T @ lam_in_qp
            grad_l_new = ev_new[1] + ev_new[3].T @ lam_eq_qp + ev_new[5].T @ lam_in_qp
            B = _bfgs_update(B, x_new - x, grad_l_new - grad_l_old)

        if opts.record_history:
            history.append({
                "iteration": iteration,
                "objective": f,
                "infeasibility": infeas,
                "kkt": kkt,
                "step_norm": step_norm,
                "alpha": alpha,
                "penalty": float(max(np.max(mu_eq, initial=0.0), np.max(mu_in, initial=0.0))),
                "proximal": rho,
                "merit_before": phi0,
                "merit_after": phi_new,
                "qp_iterations": qp.iterations,
                "active_rows": int(np.count_nonzero(qp.active)),
            })

        x = x_new
        f, g, c_eq, J_eq, c_in, J_in = ev_new
        lam_eq, lam_in, z = lam_eq_qp, lam_in_qp, qp.z
        active, bstatus = qp.active, qp.bound_status

    return SolveResult(
        x_star=x,
        lam_eq=lam_eq,
        lam_in=lam_in,
        lam_bounds=z,
        status=status,
        iterations=iteration,
        objective=f,
        primal_infeasibility=_infeasibility(c_eq, c_in),
        kkt_residual=float(kkt),
        solve_wall_time=time.perf_counter() - t_start,
        history=history,
    )


def _second_order_correction(H, g, J_eq, J_in, ev, d, x, lower, upper, qp, opts):
    """Re-solve the QP with constraint values taken at the trial point."""
    c_eq_t, c_in_t = ev[2], ev[4]
    b_eq = -(c_eq_t - J_eq @ d)
    b_in = -(c_in_t - J_in @ d)
    try:
        res = solve_qp(H, g, J_eq, b_eq, J_in, b_in, lower - x, upper - x,
                       active=qp.active, bound_status=qp.bound_status,
                       max_iterations=opts.qp_max_iterations)
    except QpError:
        return None
    return res.d if res.optimal else None
