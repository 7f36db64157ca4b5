"""Sparse convex QP solver (dual active set, Goldfarb-Idnani style).

    minimize    1/2 d'Hd + g'd
    subject to  A_eq d = b_eq,  A_in d <= b_in,  lb <= d <= ub

The working set holds inequality rows and variable bounds enforced as
equalities.  Starting from a dual-feasible working set (the warm start with
negative multipliers removed), the most violated constraint is brought in by
a primal-dual step; a working constraint whose multiplier would turn negative
is dropped on the way, and a constraint linearly dependent on the working set
is handled by pure dual steps.  Iterates stay dual feasible, so no phase-1
problem is needed and degenerate working sets never form.

The KKT matrix of the initial working set is factorized once (sparse LU);
later changes border it and are handled through a small dense Schur
complement, so a working-set change costs one sparse solve.  The matrix is
refactorized after ``refactor_every`` changes.

``H`` must be positive definite on the null space of the equality rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

FREE, AT_LOWER, AT_UPPER = 0, -1, 1
_ROW, _LOW, _UP = 0, 1, 2


class QpError(RuntimeError):
    pass


@dataclass
class QpResult:
    d: np.ndarray
    lam_eq: np.ndarray
    lam_in: np.ndarray
    z: np.ndarray  # bound multipliers: z_upper - z_lower (<= 0 at lower, >= 0 at upper)
    active: np.ndarray
    bound_status: np.ndarray
    iterations: int
    optimal: bool


def initial_working_set(c_in, x, lower, upper, tol=1e-9):
    """Working set guess: rows with ``c_in >= -tol``, variables sitting on a bound."""
    active = np.asarray(c_in) >= -tol
    status = np.zeros(len(x), dtype=np.int8)
    status[np.isfinite(lower) & (x <= lower + tol)] = AT_LOWER
    status[np.isfinite(upper) & (x >= upper - tol)] = AT_UPPER
    fixed_var = np.isfinite(lower) & np.isfinite(upper) & (lower == upper)
    status[fixed_var] = AT_LOWER
    return active, status


class _Problem:
    def __init__(self, H, g, A_eq, b_eq, A_in, b_in, lb, ub, reg):
        self.H, self.g = H, g
        self.A_eq, self.b_eq = A_eq, b_eq
        self.A_in, self.b_in = A_in, b_in
        self.lb, self.ub = lb, ub
        self.reg = reg
        self.n = len(g)
        self.m_eq = A_eq.shape[0]
        self.m_in = A_in.shape[0]

    def normal_sparse(self, kind, idx):
        """``(indices, values, b)`` of a constraint normal."""
        if kind == _ROW:
            lo, hi = self.A_in.indptr[idx], self.A_in.indptr[idx + 1]
            return (self.A_in.indices[lo:hi].astype(np.int64), self.A_in.data[lo:hi].copy(),
                    self.b_in[idx])
        if kind == _LOW:
            return np.array([idx]), np.array([-1.0]), -self.lb[idx]
        return np.array([idx]), np.array([1.0]), self.ub[idx]

    def normal_dense(self, kind, idx):
        """Dense normal and right-hand side of a constraint in ``a'd <= b`` form."""
        a_idx, a_val, b = self.normal_sparse(kind, idx)
        a = np.zeros(self.n)
        a[a_idx] = a_val
        return a, b


class _WorkingKkt:
    """KKT system of the working set: base factorization plus Schur borders.

    Variables fixed on a bound when the base is built are eliminated; the base
    matrix covers the free variables, the equality rows and the working
    inequality rows.  Later edits are borders:

    ``("row", p)``  inequality row ``p`` enters the working set
    ``("del", q)``  base row ``q`` leaves (unit column freeing its equation)
    ``("fix", j)``  a base-free variable is fixed on a bound
    ``("var", j)``  a base-fixed variable is released (its own column and row)
    """

    def __init__(self, prob: _Problem, active, status):
        self.p = prob
        n, m_eq = prob.n, prob.m_eq
        self.base_free = status == FREE
        self.F = np.flatnonzero(self.base_free)
        self.B = np.flatnonzero(~self.base_free)
        self.nF = len(self.F)
        self.fpos = np.full(n, -1, dtype=np.int64)
        self.fpos[self.F] = np.arange(self.nF)
        self.rows = np.flatnonzero(active)
        self.nW = len(self.rows)
        self.row_pos = {int(r): q for q, r in enumerate(self.rows)}
        # values of eliminated variables; kept current as bounds switch
        self.fix_val = np.zeros(n)
        lo = self.B[status[self.B] == AT_LOWER]
        up = self.B[status[self.B] == AT_UPPER]
        self.fix_val[lo] = prob.lb[lo]
        self.fix_val[up] = prob.ub[up]
        self.fix_sign = np.zeros(n)
        self.fix_sign[lo] = -1.0
        self.fix_sign[up] = 1.0

        H_FF = prob.H[self.F][:, self.F]
        A_eqF = prob.A_eq[:, self.F]
        A_WF = prob.A_in[self.rows][:, self.F]
        A = sp.vstack([A_eqF, A_WF], format="csr")
        self.m = A.shape[0]
        self.K = sp.bmat([[H_FF, A.T], [A, None]], format="csr") if self.nF + self.m else \
            sp.csr_matrix((0, 0))
        self.size = self.nF + self.m
        reg = prob.reg
        K_reg = (self.K + sp.diags(np.concatenate([np.full(self.nF, reg), np.full(self.m, -reg)]))
                 ).tocsc()
        try:
            self.lu = spla.splu(K_reg, permc_spec="COLAMD", diag_pivot_thresh=0.1) \
                if self.size else None
        except RuntimeError as exc:  # exactly singular even after regularization
            raise QpError(f"KKT factorization failed: {exc}") from exc
        # column blocks used to rebuild the stationarity of eliminated variables
        self.H_B = prob.H[self.B]
        self.A_eqT_B = prob.A_eq[:, self.B].T.tocsr()
        self.A_inT_B = prob.A_in[:, self.B].T.tocsr()
        self.H_csc = prob.H.tocsc()
        self.A_eq_csc = prob.A_eq.tocsc()
        self.A_in_csc = prob.A_in.tocsc()
        self.W_pos = np.full(prob.m_in, -1, dtype=np.int64)
        self.W_pos[self.rows] = np.arange(self.nW)
        self.deleted = np.zeros(self.nW, dtype=bool)
        self.borders: list = []
        self.U_idx: list = []
        self.U_val: list = []
        self._Z = np.empty((16, self.size))
        self.S = np.zeros((0, 0))
        self.D = np.zeros((0, 0))
        self._S_lu = None

    # -- working-set edits -------------------------------------------------------

    @property
    def n_borders(self) -> int:
        return len(self.borders)

    @property
    def Z(self) -> np.ndarray:
        return self._Z[:len(self.borders)]

    def _lu_solve(self, r):
        return self.lu.solve(r) if self.lu is not None else np.zeros(0)

    def _border_matvec(self, v) -> np.ndarray:
        return np.array([float(self.U_val[k] @ v[self.U_idx[k]]) for k in range(len(self.borders))])

    def _border_rmatvec(self, w) -> np.ndarray:
        out = np.zeros(self.size)
        for k in range(len(w)):
            np.add.at(out, self.U_idx[k], w[k] * self.U_val[k])
        return out

    def _cross(self, entry, other) -> float:
        """Entry of the border-border block ``D``."""
        a, b = entry, other
        if a[0] == "var" and b[0] == "var":
            return float(self.H_csc[b[1], a[1]])
        if a[0] == "row" and b[0] == "var":
            a, b = b, a
        if a[0] == "var" and b[0] == "row":
            return float(self.p.A_in[b[1], a[1]])
        return 0.0

    def _column(self, entry):
        kind, idx = entry
        nF, m_eq = self.nF, self.p.m_eq
        if kind == "row":
            lo, hi = self.p.A_in.indptr[idx], self.p.A_in.indptr[idx + 1]
            cols = self.p.A_in.indices[lo:hi]
            vals = self.p.A_in.data[lo:hi]
            keep = self.fpos[cols] >= 0
            return self.fpos[cols[keep]], vals[keep].copy()
        if kind == "del":
            return np.array([nF + m_eq + idx]), np.ones(1)
        if kind == "fix":
            return np.array([self.fpos[idx]]), np.ones(1)
        # released variable: its column of H (free part) and of the base rows
        parts_i, parts_v = [], []
        lo, hi = self.H_csc.indptr[idx], self.H_csc.indptr[idx + 1]
        r, v = self.H_csc.indices[lo:hi], self.H_csc.data[lo:hi]
        keep = self.fpos[r] >= 0
        parts_i.append(self.fpos[r[keep]])
        parts_v.append(v[keep])
        lo, hi = self.A_eq_csc.indptr[idx], self.A_eq_csc.indptr[idx + 1]
        parts_i.append(nF + self.A_eq_csc.indices[lo:hi])
        parts_v.append(self.A_eq_csc.data[lo:hi])
        lo, hi = self.A_in_csc.indptr[idx], self.A_in_csc.indptr[idx + 1]
        r, v = self.A_in_csc.indices[lo:hi], self.A_in_csc.data[lo:hi]
        w = self.W_pos[r]
        keep = w >= 0
        parts_i.append(nF + m_eq + w[keep])
        parts_v.append(v[keep])
        return np.concatenate(parts_i).astype(np.int64), np.concatenate(parts_v)

    def _append(self, entry):
        u_idx, u_val = self._column(entry)
        u = np.zeros(self.size)
        np.add.at(u, u_idx, u_val)
        z = self._lu_solve(u)
        nb = len(self.borders)
        cross = np.array([float(u_val @ self._Z[k, u_idx]) for k in range(nb)])
        dcol = np.array([self._cross(entry, other) for other in self.borders])
        d_self = float(self.H_csc[entry[1], entry[1]]) if entry[0] == "var" else 0.0
        S = np.empty((nb + 1,) * 2)
        S[:-1, :-1] = self.S
        S[:-1, -1] = S[-1, :-1] = cross - dcol
        S[-1, -1] = float(u_val @ z[u_idx]) - d_self
        D = np.empty((nb + 1,) * 2)
        D[:-1, :-1] = self.D
        D[:-1, -1] = D[-1, :-1] = dcol
        D[-1, -1] = d_self
        self.S, self.D = S, D
        if nb == len(self._Z):
            self._Z = np.concatenate([self._Z, np.empty_like(self._Z)])
        self._Z[nb] = z
        self.U_idx.append(u_idx)
        self.U_val.append(u_val)
        self.borders.append(entry)
        self._S_lu = None

    def _drop_border(self, entry):
        k = self.borders.index(entry)
        nb = len(self.borders)
        keep = np.arange(nb) != k
        self.S = self.S[np.ix_(keep, keep)]
        self.D = self.D[np.ix_(keep, keep)]
        self._Z[k:nb - 1] = self._Z[k + 1:nb]
        del self.U_idx[k], self.U_val[k], self.borders[k]
        self._S_lu = None

    def add(self, kind, idx):
        idx = int(idx)
        if kind == _ROW:
            q = self.row_pos.get(idx)
            if q is not None and self.deleted[q]:
                self._drop_border(("del", q))
                self.deleted[q] = False
            else:
                self._append(("row", idx))
            return
        value = self.p.lb[idx] if kind == _LOW else self.p.ub[idx]
        if self.base_free[idx]:
            self._append(("fix", idx))
        else:
            self._drop_border(("var", idx))
        self.fix_val[idx] = value
        self.fix_sign[idx] = -1.0 if kind == _LOW else 1.0

    def remove(self, kind, idx):
        idx = int(idx)
        if kind == _ROW:
            if ("row", idx) in self.borders:
                self._drop_border(("row", idx))
            else:
                q = self.row_pos[idx]
                self.deleted[q] = True
                self._append(("del", q))
            return
        if self.base_free[idx]:
            self._drop_border(("fix", idx))
        else:
            self._append(("var", idx))
        self.fix_sign[idx] = 0.0

    # -- solves ------------------------------------------------------------------------

    def _solve_once(self, r, rb):
        s0 = self._lu_solve(r)
        if not self.borders:
            return s0, np.zeros(0)
        if self._S_lu is None:
            self._S_lu = sla.lu_factor(self.S, check_finite=False)
        w = sla.lu_solve(self._S_lu, self._border_matvec(s0) - rb, check_finite=False)
        return s0 - w @ self.Z, w

    def _residual(self, r, rb, s, w):
        res_r = r - self.K @ s
        if len(w):
            res_r -= self._border_rmatvec(w)
            res_b = rb - self._border_matvec(s) - self.D @ w
        else:
            res_b = np.zeros(0)
        return res_r, res_b

    def solve(self, r, rb, refinements=2):
        s, w = self._solve_once(r, rb)
        scale = 1.0 + max(np.max(np.abs(r), initial=0.0), np.max(np.abs(rb), initial=0.0))
        res = 0.0
        for it in range(refinements + 1):
            res_r, res_b = self._residual(r, rb, s, w)
            res = max(np.max(np.abs(res_r), initial=0.0), np.max(np.abs(res_b), initial=0.0)) / scale
            if res <= 1e-11 or it == refinements:
                break
            ds, dw = self._solve_once(res_r, res_b)
            s, w = s + ds, w + dw
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(w))):
            raise QpError("non-finite KKT solution")
        return s, w, res

    def _rhs(self, stat, r_eq, r_in, fixed):
        """Right-hand sides for stationarity ``-stat`` and constraint values.

        ``fixed`` holds the values of eliminated variables (zero for directions).
        """
        p = self.p
        nF, m_eq = self.nF, p.m_eq
        corr_stat = p.H @ fixed if fixed is not None else np.zeros(p.n)
        corr_eq = p.A_eq @ fixed if fixed is not None else np.zeros(m_eq)
        corr_in = p.A_in @ fixed if fixed is not None else np.zeros(p.m_in)
        r = np.empty(self.size)
        r[:nF] = -stat[self.F] - corr_stat[self.F]
        r[nF:nF + m_eq] = r_eq - corr_eq
        r[nF + m_eq:] = r_in[self.rows] - corr_in[self.rows]
        rb = np.empty(len(self.borders))
        for k, (kind, idx) in enumerate(self.borders):
            if kind == "row":
                rb[k] = r_in[idx] - corr_in[idx]
            elif kind == "del":
                rb[k] = 0.0
            elif kind == "fix":
                rb[k] = self.fix_val[idx] if fixed is not None else 0.0
            else:
                rb[k] = -stat[idx] - corr_stat[idx]
        return r, rb

    def _current_fixed(self):
        fixed = np.zeros(self.p.n)
        live = self.B[self.fix_sign[self.B] != 0.0]
        fixed[live] = self.fix_val[live]
        return fixed

    def unpack(self, s, w, stat, fixed):
        """Primal part, equality multipliers, row multipliers and bound multipliers.

        Bound multipliers refer to the normal ``-e_j`` (lower) or ``e_j`` (upper).
        """
        p = self.p
        n, nF, m_eq = p.n, self.nF, p.m_eq
        x = fixed.copy() if fixed is not None else np.zeros(n)
        x[self.F] = s[:nF]
        lam_eq = s[nF:nF + m_eq]
        lam_in = np.zeros(p.m_in)
        lam_b = np.zeros(n)
        y = s[nF + m_eq:]
        live = ~self.deleted
        lam_in[self.rows[live]] = y[live]
        for k, (kind, idx) in enumerate(self.borders):
            if kind == "row":
                lam_in[idx] = w[k]
            elif kind == "var":
                x[idx] = w[k]
            elif kind == "fix":
                x[idx] = self.fix_val[idx] if fixed is not None else 0.0
                lam_b[idx] = w[k] * self.fix_sign[idx]
        # eliminated variables: multiplier from their stationarity row
        B = self.B
        sign = self.fix_sign[B]
        on = sign != 0.0
        if np.any(on):
            grad = self.H_B @ x + self.A_eqT_B @ lam_eq + self.A_inT_B @ lam_in + stat[B]
            lam_b[B[on]] = -sign[on] * grad[on]
        return x, lam_eq, lam_in, lam_b

    def eqp(self):
        p = self.p
        fixed = self._current_fixed()
        r, rb = self._rhs(p.g, p.b_eq, p.b_in, fixed)
        s, w, res = self.solve(r, rb)
        return self.unpack(s, w, p.g, fixed) + (res,)

    def direction(self, a_idx, a_val):
        p = self.p
        a_p = np.zeros(p.n)
        a_p[a_idx] = a_val
        r, rb = self._rhs(a_p, np.zeros(p.m_eq), np.zeros(p.m_in), None)
        s, w = self._solve_once(r, rb)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(w))):
            raise QpError("non-finite KKT solution")
        return self.unpack(s, w, a_p, None)


def solve_qp(H, g, A_eq, b_eq, A_in, b_in, lb, ub, active=None, bound_status=None,
             max_iterations=200, tol=1e-9, reg=1e-10, dependence_tol=1e-10,
             refactor_every=200) -> QpResult:
    """Solve the convex QP; ``active`` / ``bound_status`` warm-start the working set.

    ``max_iterations`` bounds the number of working-set changes.
    """
    g = np.asarray(g, dtype=float)
    n = len(g)
    H = sp.csr_matrix(H)
    A_eq = sp.csr_matrix(A_eq) if A_eq is not None else sp.csr_matrix((0, n))
    A_in = sp.csr_matrix(A_in) if A_in is not None else sp.csr_matrix((0, n))
    A_in.sum_duplicates()
    b_eq = np.asarray(b_eq, float) if b_eq is not None else np.zeros(0)
    b_in = np.asarray(b_in, float) if b_in is not None else np.zeros(0)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)
    if np.any(lb > ub):
        raise QpError("inconsistent variable bounds")
    m_in = A_in.shape[0]
    prob = _Problem(H, g, A_eq, b_eq, A_in, b_in, lb, ub, reg)

    active = np.zeros(m_in, bool) if active is None else np.asarray(active, bool).copy()
    status = np.zeros(n, np.int8) if bound_status is None else np.asarray(bound_status, np.int8).copy()
    status[(status == AT_LOWER) & ~np.isfinite(lb)] = FREE
    status[(status == AT_UPPER) & ~np.isfinite(ub)] = FREE
    pinned = np.isfinite(lb) & (lb == ub)
    status[pinned] = AT_LOWER
    row_scale = 1.0 + np.abs(b_in)
    bound_scale_l = 1.0 + np.abs(np.where(np.isfinite(lb), lb, 0.0))
    bound_scale_u = 1.0 + np.abs(np.where(np.isfinite(ub), ub, 0.0))
    changes = 0

    def build():
        return _WorkingKkt(prob, active, status)

    def drop(kkt, kind, idx):
        if kind == _ROW:
            active[idx] = False
        else:
            status[idx] = FREE
        kkt.remove(kind, idx)

    def add(kkt, kind, idx):
        if kind == _ROW:
            active[idx] = True
        else:
            status[idx] = AT_LOWER if kind == _LOW else AT_UPPER
        kkt.add(kind, idx)

    def result(d, lam_eq, lam_in, lam_b, optimal):
        z = np.where(status == AT_UPPER, lam_b, np.where(status == AT_LOWER, -lam_b, 0.0))
        return QpResult(d, lam_eq, np.where(active, lam_in, 0.0), z, active.copy(),
                        status.copy(), changes, optimal)

    kkt = build()
    # establish a dual-feasible start by removing negative multipliers
    while True:
        d, lam_eq, lam_in, lam_b, res = kkt.eqp()
        if res > 1e-6:
            # warm start produced a degenerate working set; restart from bounds only
            if active.any():
                active[:] = False
                kkt = build()
                continue
            raise QpError("inconsistent equality constraints")
        scale = 1.0 + np.max(np.abs(g), initial=0.0)
        neg_rows = np.flatnonzero(active & (lam_in < -tol * scale))
        neg_bounds = np.flatnonzero((status != FREE) & ~pinned & (lam_b < -tol * scale))
        if not (len(neg_rows) or len(neg_bounds)):
            break
        changes += len(neg_rows) + len(neg_bounds)
        if kkt.n_borders + len(neg_rows) + len(neg_bounds) > refactor_every:
            active[neg_rows] = False
            status[neg_bounds] = FREE
            kkt = build()
        else:
            for j in neg_rows:
                drop(kkt, _ROW, j)
            for j in neg_bounds:
                drop(kkt, _LOW if status[j] == AT_LOWER else _UP, j)
        if changes > max_iterations:
            return result(d, lam_eq, lam_in, lam_b, False)
    lam_in = np.where(active, np.maximum(lam_in, 0.0), 0.0)
    lam_b = np.where(pinned, lam_b, np.maximum(lam_b, 0.0))

    def most_violated(d):
        r = (A_in @ d - b_in) / row_scale
        r[active] = -np.inf
        free = status == FREE
        v_low = np.where(free & np.isfinite(lb), (lb - d) / bound_scale_l, -np.inf)
        v_up = np.where(free & np.isfinite(ub), (d - ub) / bound_scale_u, -np.inf)
        cand = [np.max(r, initial=-np.inf), np.max(v_low, initial=-np.inf),
                np.max(v_up, initial=-np.inf)]
        which = int(np.argmax(cand))
        return which, cand[which], (r, v_low, v_up)[which]

    polished = False
    while changes <= max_iterations:
        which, worst, viol_vec = most_violated(d)
        if worst <= tol:
            if polished:
                return result(d, lam_eq, lam_in, lam_b, True)
            # iterates are updated incrementally; finish with an exact working-set solve
            d, lam_eq, lam_in, lam_b, _ = kkt.eqp()
            lam_in = np.where(active, np.maximum(lam_in, 0.0), 0.0)
            lam_b = np.where(pinned, lam_b, np.maximum(lam_b, 0.0))
            polished = True
            continue
        polished = False
        kind = (_ROW, _LOW, _UP)[which]
        p = int(np.argmax(viol_vec))
        a_idx, a_val, b_p = prob.normal_sparse(kind, p)
        u_p = 0.0

        while True:
            if kkt.n_borders >= refactor_every:
                kkt = build()
            z, w_eq, w_in, w_b = kkt.direction(a_idx, a_val)
            slope = float(a_val @ z[a_idx])
            viol = float(a_val @ d[a_idx] - b_p)
            dependent = -slope <= dependence_tol * max(1.0, float(a_val @ a_val))
            t_full = np.inf if dependent else max(viol, 0.0) / -slope
            blk_rows = active & (w_in < 0.0)
            blk_vars = (status != FREE) & ~pinned & (w_b < 0.0)
            ratios_rows = np.full(m_in, np.inf)
            ratios_rows[blk_rows] = lam_in[blk_rows] / -w_in[blk_rows]
            ratios_vars = np.full(n, np.inf)
            ratios_vars[blk_vars] = lam_b[blk_vars] / -w_b[blk_vars]
            j_row = int(np.argmin(ratios_rows)) if m_in else -1
            j_var = int(np.argmin(ratios_vars))
            t_row = ratios_rows[j_row] if m_in else np.inf
            t_var = ratios_vars[j_var]
            t_dual = min(t_row, t_var)
            if not np.isfinite(t_full) and not np.isfinite(t_dual):
                return result(d, lam_eq, lam_in, lam_b, False)  # QP infeasible
            t = min(t_full, t_dual)
            if not dependent:
                d = d + t * z
            lam_eq = lam_eq + t * w_eq
            lam_in = np.where(active, np.maximum(lam_in + t * w_in, 0.0), 0.0)
            lam_b = np.where(status != FREE, lam_b + t * w_b, 0.0)
            u_p += t
            changes += 1
            if t_full <= t_dual:
                add(kkt, kind, p)
                if kind == _ROW:
                    lam_in[p] = u_p
                else:
                    lam_b[p] = u_p
                break
            if t_row <= t_var:
                drop(kkt, _ROW, j_row)
                lam_in[j_row] = 0.0
            else:
                drop(kkt, _LOW if status[j_var] == AT_LOWER else _UP, j_var)
                lam_b[j_var] = 0.0
            if changes > max_iterations:
                return result(d, lam_eq, lam_in, lam_b, False)

    return result(d, lam_eq, lam_in, lam_b, False)
