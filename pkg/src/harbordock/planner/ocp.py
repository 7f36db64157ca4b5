"""Direct-collocation transcription of the docking optimal control problem.

Decision vector layout::

    [ states (4N+1 nodes x 6) | inputs (N x 4, scaled by f_max) | slacks ]

State node ``4k + j`` is the ``j``-th interpolation point of interval ``k``
(``j = 0`` the interval start, ``j = 1..3`` the Legendre-Gauss points); node
``4N`` is the end of the horizon.  Inputs are held constant per interval and
stored divided by ``f_max`` for conditioning.

Softened inequality rows (each with its own non-negative slack):

* collision: every footprint vertex inside every region halfplane, at the
  interval boundary nodes ``1..N``;
* velocity: surge/sway/yaw-rate bounds at boundary nodes ``1..N`` and at the
  collocation points;
* thrust: ``(f_x^2 + f_y^2) / f_max - f_max <= s`` per thruster and interval.

The initial node is pinned by hard equality rows, so rows there are omitted.
Slack costs are integrated over the interval length ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..geometry import ConvexRegion, Footprint
from ..nlp import NlpProblem
from ..vessel import (ModelParams, VesselState, planning_dynamics_batch,
                      planning_dynamics_hessian_contraction, planning_dynamics_jacobian)
from .collocation import legendre_gauss
from .cost import cost_terms, pseudo_huber_grad_hess
from .types import DockingSpec

NX, NU = 6, 4
INPUT_BOX = 1.0  # in units of f_max


class InvalidRegion(ValueError):
    pass


@dataclass(frozen=True)
class RowFamilies:
    collision: slice
    velocity: slice
    thrust: slice


class DockingOcp:
    """Index bookkeeping, callbacks and curvature model for one OCP instance."""

    def __init__(self, measured_state, region: ConvexRegion, spec: DockingSpec,
                 params: ModelParams, footprint: Footprint | None = None):
        if isinstance(measured_state, VesselState):
            measured_state = measured_state.as_array()
        if region.n_rows and not region.is_nonempty():
            raise InvalidRegion("permissible region is empty")
        self.x0 = np.asarray(measured_state, dtype=float).copy()
        self.region = region
        self.spec = spec
        self.params = params
        self.footprint = footprint or Footprint.rectangle(params.footprint_length,
                                                          params.footprint_width)
        self.f_max = spec.f_max if spec.f_max is not None else params.f_max
        self.N = N = spec.intervals_N
        self.d = spec.degree
        self.h = spec.interval
        self.tau, self.D, self.cont, self.quad = legendre_gauss(self.d)
        self.nodes_per_interval = self.d + 1
        self.n_nodes = N * self.nodes_per_interval + 1
        self.n_states = self.n_nodes * NX
        self.off_u = self.n_states
        self.n_inputs = N * NU
        self.off_s = self.off_u + self.n_inputs

        K = region.n_rows
        V = len(self.footprint.vertices)
        n_col = N * V * K
        self.vel_nodes = self._velocity_nodes()
        n_vel = len(self.vel_nodes) * 6
        n_thr = N * 2
        self.rows = RowFamilies(slice(0, n_col), slice(n_col, n_col + n_vel),
                                slice(n_col + n_vel, n_col + n_vel + n_thr))
        self.n_ineq = n_col + n_vel + n_thr
        self.n_vars = self.off_s + self.n_ineq
        self.n_eq = NX + N * (self.d + 1) * NX

        # slack cost weights, integrated over the interval length
        self.slack_cost = np.concatenate([
            np.full(n_col, spec.slack_weight_collision),
            np.full(n_vel, spec.slack_weight_velocity),
            np.full(n_thr, spec.slack_weight_thrust),
        ]) * self.h

        self._build_eq_pattern()
        self._build_ineq_pattern()

    # -- layout helpers ----------------------------------------------------

    def node(self, k: int, j: int) -> int:
        return k * self.nodes_per_interval + j

    def _velocity_nodes(self) -> np.ndarray:
        # boundary nodes after the initial one; the initial state is the measurement
        return self.boundary_nodes[1:]

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.nodes_per_interval

    @property
    def colloc_nodes(self) -> np.ndarray:
        k = np.arange(self.N)[:, None]
        return (k * self.nodes_per_interval + np.arange(1, self.d + 1)[None, :])

    def split(self, z):
        X = z[:self.n_states].reshape(self.n_nodes, NX)
        U = z[self.off_u:self.off_s].reshape(self.N, NU) * self.f_max
        S = z[self.off_s:]
        return X, U, S

    def pack(self, X, U, S=None) -> np.ndarray:
        z = np.zeros(self.n_vars)
        z[:self.n_states] = np.asarray(X, float).ravel()
        z[self.off_u:self.off_s] = np.asarray(U, float).ravel() / self.f_max
        if S is not None:
            z[self.off_s:] = S
        return z

    def bounds(self):
        lower = np.full(self.n_vars, -np.inf)
        upper = np.full(self.n_vars, np.inf)
        lower[self.off_s:] = 0.0
        # loose per-component box on the inputs; never active when the thrust
        # rows hold, but keeps the linearized subproblems bounded near u = 0
        lower[self.off_u:self.off_s] = -INPUT_BOX
        upper[self.off_u:self.off_s] = INPUT_BOX
        return lower, upper

    # -- equality constraints ------------------------------------------------

    def _build_eq_pattern(self):
        N, d = self.N, self.d
        rows, cols, vals = [], [], []
        # initial condition
        rows.append(np.arange(NX))
        cols.append(np.arange(NX))
        vals.append(np.ones(NX))
        base = NX
        dyn_rows, dyn_cols, inp_rows, inp_cols = [], [], [], []
        for k in range(N):
            for i in range(d):
                r0 = base + (k * (d + 1) + i) * NX
                for j in range(d + 1):
                    n = self.node(k, j)
                    rows.append(r0 + np.arange(NX))
                    cols.append(n * NX + np.arange(NX))
                    vals.append(np.full(NX, self.D[i, j]))
                n = self.node(k, i + 1)
                rr, cc = np.meshgrid(r0 + np.arange(NX), n * NX + np.arange(NX), indexing="ij")
                dyn_rows.append(rr.ravel())
                dyn_cols.append(cc.ravel())
                rr, cc = np.meshgrid(r0 + 3 + np.arange(3), self.off_u + k * NU + np.arange(NU),
                                     indexing="ij")
                inp_rows.append(rr.ravel())
                inp_cols.append(cc.ravel())
            r0 = base + (k * (d + 1) + d) * NX
            rows.append(r0 + np.arange(NX))
            cols.append(self.node(k + 1, 0) * NX + np.arange(NX))
            vals.append(np.ones(NX))
            for j in range(d + 1):
                rows.append(r0 + np.arange(NX))
                cols.append(self.node(k, j) * NX + np.arange(NX))
                vals.append(np.full(NX, -self.cont[j]))
        self._eq_static = (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
        self._eq_dyn = (np.concatenate(dyn_rows), np.concatenate(dyn_cols))
        self._eq_inp = (np.concatenate(inp_rows), np.concatenate(inp_cols))
        # input block of the defect Jacobian is constant
        mass = self.params.S_diag * np.array([self.params.m11, self.params.m22, self.params.m33])
        Ju = self.params.thrust_map / mass[:, None] * self.f_max
        self._eq_inp_vals = np.tile(-self.h * Ju.ravel(), N * d)
        self._colloc_rows = np.array([
            base + (k * (d + 1) + i) * NX for k in range(N) for i in range(d)
        ]).reshape(N, d)
        self.eq_sparsity = sp.csr_matrix(
            (np.ones(len(self._eq_static[0]) + len(self._eq_dyn[0]) + len(self._eq_inp[0])),
             (np.concatenate([self._eq_static[0], self._eq_dyn[0], self._eq_inp[0]]),
              np.concatenate([self._eq_static[1], self._eq_dyn[1], self._eq_inp[1]]))),
            shape=(self.n_eq, self.n_vars))
        self.eq_sparsity.data[:] = 1.0

    def eq_constraints(self, z):
        N, d = self.N, self.d
        X, U, _ = self.split(z)
        c = np.empty(self.n_eq)
        c[:NX] = X[0] - self.x0
        Xk = X[:-1].reshape(N, d + 1, NX)
        Xc = Xk[:, 1:, :]
        f = planning_dynamics_batch(Xc, np.repeat(U[:, None, :], d, axis=1), self.params)
        defect = np.einsum("ij,kjs->kis", self.D, Xk) - self.h * f
        cont = X[self.boundary_nodes[1:]] - np.einsum("j,kjs->ks", self.cont, Xk)
        body = np.concatenate([defect, cont[:, None, :]], axis=1)
        c[NX:] = body.ravel()

        Jx, _ = planning_dynamics_jacobian(Xc, None, self.params)
        dyn_vals = (-self.h * Jx).ravel()
        r_s, c_s, v_s = self._eq_static
        J = sp.csr_matrix(
            (np.concatenate([v_s, dyn_vals, self._eq_inp_vals]),
             (np.concatenate([r_s, self._eq_dyn[0], self._eq_inp[0]]),
              np.concatenate([c_s, self._eq_dyn[1], self._eq_inp[1]]))),
            shape=(self.n_eq, self.n_vars))
        return c, J

    # -- inequality constraints ---------------------------------------------

    def _build_ineq_pattern(self):
        N = self.N
        K = self.region.n_rows
        V = len(self.footprint.vertices)
        nodes = self.boundary_nodes[1:]
        # collision rows: index order (node, vertex, halfplane)
        n_idx, v_idx, r_idx = np.meshgrid(np.arange(N), np.arange(V), np.arange(K), indexing="ij")
        self._col_node = nodes[n_idx.ravel()]
        self._col_vertex = v_idx.ravel()
        self._col_row = r_idx.ravel()
        n_col = len(self._col_node)
        rows = np.arange(n_col)
        col_rows = np.repeat(rows, 3)
        col_cols = (self._col_node[:, None] * NX + np.array([0, 1, 2])[None, :]).ravel()
        # velocity rows: (velocity node, component, sign)
        vn = self.vel_nodes
        comp = np.tile(np.repeat(np.arange(3), 2), len(vn))
        sign = np.tile(np.array([1.0, -1.0]), 3 * len(vn))
        vnode = np.repeat(vn, 6)
        vel_rows = self.rows.velocity.start + np.arange(len(vnode))
        vel_cols = vnode * NX + 3 + comp
        self._vel_sign = sign
        self._vel_comp = comp
        self._vel_node = vnode
        self._vel_bound = self.spec.velocity_bounds[comp] * (1.0 - self.spec.velocity_margin)
        # thrust rows: (interval, thruster)
        thr_rows = self.rows.thrust.start + np.arange(2 * N)
        thr_k = np.repeat(np.arange(N), 2)
        thr_i = np.tile(np.arange(2), N)
        thr_cols_x = self.off_u + thr_k * NU + 2 * thr_i
        thr_rows2 = np.repeat(thr_rows, 2)
        thr_cols2 = np.stack([thr_cols_x, thr_cols_x + 1], axis=1).ravel()
        self._thr_k, self._thr_i = thr_k, thr_i
        slack_rows = np.arange(self.n_ineq)
        slack_cols = self.off_s + slack_rows
        self._in_rows = np.concatenate([col_rows, vel_rows, thr_rows2, slack_rows])
        self._in_cols = np.concatenate([col_cols, vel_cols, thr_cols2, slack_cols])
        self._vel_vals = sign
        self._slack_vals = -np.ones(self.n_ineq)
        self.in_sparsity = sp.csr_matrix(
            (np.ones(len(self._in_rows)), (self._in_rows, self._in_cols)),
            shape=(self.n_ineq, self.n_vars))
        self.in_sparsity.data[:] = 1.0

    def ineq_constraints(self, z):
        X, U, S = self.split(z)
        c, vals = self._ineq_values(X, U)
        c = c - S
        vals = np.concatenate([vals, self._slack_vals])
        J = sp.csr_matrix((vals, (self._in_rows, self._in_cols)), shape=(self.n_ineq, self.n_vars))
        return c, J

    def _ineq_values(self, X, U):
        """Row values without slacks, plus Jacobian data (slack entries excluded)."""
        A, b = self.region.A, self.region.b
        verts = self.footprint.vertices
        psi = X[self._col_node, 2]
        cs, sn = np.cos(psi), np.sin(psi)
        v = verts[self._col_vertex]
        a = A[self._col_row] if len(A) else np.zeros((0, 2))
        world = np.stack([cs * v[:, 0] - sn * v[:, 1], sn * v[:, 0] + cs * v[:, 1]], axis=1)
        c_col = np.einsum("ij,ij->i", a, world + X[self._col_node, 0:2]) - b[self._col_row] if len(A) else np.zeros(0)
        dworld = np.stack([-sn * v[:, 0] - cs * v[:, 1], cs * v[:, 0] - sn * v[:, 1]], axis=1)
        dpsi = np.einsum("ij,ij->i", a, dworld)
        col_vals = np.stack([a[:, 0], a[:, 1], dpsi], axis=1).ravel() if len(A) else np.zeros(0)

        c_vel = self._vel_sign * X[self._vel_node, 3 + self._vel_comp] - self._vel_bound

        fx = U[self._thr_k, 2 * self._thr_i]
        fy = U[self._thr_k, 2 * self._thr_i + 1]
        fm = self.f_max
        c_thr = (fx**2 + fy**2) / fm - fm
        # derivative w.r.t. the scaled input (u / f_max)
        thr_vals = np.stack([2.0 * fx, 2.0 * fy], axis=1).ravel()
        return (np.concatenate([c_col, c_vel, c_thr]),
                np.concatenate([col_vals, self._vel_vals, thr_vals]))

    # -- objective ------------------------------------------------------------

    def _colloc_weights(self):
        return self.h * self.quad

    def objective(self, z):
        X, U, S = self.split(z)
        nodes = self.colloc_nodes
        Xc = X[nodes]  # (N, d, 6)
        Uc = np.repeat(U[:, None, :], self.d, axis=1)
        w = self._colloc_weights()[None, :]
        F = cost_terms(Xc, Uc, self.spec, self.params)
        f = float(np.sum(w * F) + self.slack_cost @ S)

        spec, goal = self.spec, self.spec.docking_pose
        grad = np.zeros(self.n_vars)
        pos_err = Xc[..., 0:2] - np.array([goal.north, goal.east])
        g_pos, _ = pseudo_huber_grad_hess(pos_err, spec.huber_delta)
        gX = np.zeros_like(Xc)
        gX[..., 0:2] = g_pos
        gX[..., 2] = spec.heading_weight * np.sin(Xc[..., 2] - goal.heading)
        gX[..., 4] = 2.0 * spec.sway_weight * Xc[..., 4]
        gX[..., 5] = 2.0 * spec.yawrate_weight * Xc[..., 5]
        gX *= w[..., None]
        gstate = grad[:self.n_states].reshape(self.n_nodes, NX)
        gstate[nodes.ravel()] = gX.reshape(-1, NX)
        wsum = np.sum(self._colloc_weights())
        gU = 2.0 * wsum * U / self.params.m11**2 * self.f_max
        grad[self.off_u:self.off_s] = gU.ravel()
        grad[self.off_s:] = self.slack_cost
        return f, grad

    # -- curvature model --------------------------------------------------------

    def hessian(self, z, lam_eq, lam_in):
        """Block-diagonal PSD model of the Lagrangian Hessian.

        Exact second derivatives of the objective, the collocation defects and
        the collision/thrust rows are summed per node (and per interval input
        block); each block is then projected onto the PSD cone.
        """
        X, U, _ = self.split(z)
        spec, goal = self.spec, self.spec.docking_pose
        N, d = self.N, self.d
        blocks = np.zeros((self.n_nodes, NX, NX))

        nodes = self.colloc_nodes
        Xc = X[nodes]
        w = self._colloc_weights()[None, :]
        pos_err = Xc[..., 0:2] - np.array([goal.north, goal.east])
        _, h_pos = pseudo_huber_grad_hess(pos_err, spec.huber_delta)
        Hc = np.zeros(Xc.shape[:-1] + (NX, NX))
        Hc[..., 0:2, 0:2] = h_pos
        Hc[..., 2, 2] = spec.heading_weight * np.cos(Xc[..., 2] - goal.heading)
        Hc[..., 4, 4] = 2.0 * spec.sway_weight
        Hc[..., 5, 5] = 2.0 * spec.yawrate_weight
        Hc *= w[..., None, None]
        # defect curvature: rows are sum_j D_ij X_j - h f(X_i)
        lam_def = lam_eq[self._colloc_rows[..., None] + np.arange(NX)]  # (N, d, 6)
        Hc += -self.h * planning_dynamics_hessian_contraction(Xc, lam_def, self.params)
        blocks[nodes.ravel()] = Hc.reshape(-1, NX, NX)

        K = self.region.n_rows
        if K:
            mu = lam_in[self.rows.collision]
            psi = X[self._col_node, 2]
            cs, sn = np.cos(psi), np.sin(psi)
            v = self.footprint.vertices[self._col_vertex]
            a = self.region.A[self._col_row]
            world = np.stack([cs * v[:, 0] - sn * v[:, 1], sn * v[:, 0] + cs * v[:, 1]], axis=1)
            curv = -mu * np.einsum("ij,ij->i", a, world)
            np.add.at(blocks[:, 2, 2], self._col_node, curv)

        vals, vecs = np.linalg.eigh(blocks)
        vals = np.maximum(vals, 0.0)
        blocks = np.einsum("nij,nj,nkj->nik", vecs, vals, vecs)

        wsum = np.sum(self._colloc_weights())
        in_diag = np.full((N, NU), 2.0 * wsum * self.f_max**2 / self.params.m11**2)
        mu_thr = lam_in[self.rows.thrust].reshape(N, 2)
        in_diag += np.repeat(2.0 * self.f_max * mu_thr, 2, axis=1)

        node_idx = np.arange(self.n_nodes)[:, None, None] * NX
        ii = np.broadcast_to(node_idx + np.arange(NX)[None, :, None], blocks.shape)
        jj = np.broadcast_to(node_idx + np.arange(NX)[None, None, :], blocks.shape)
        u_idx = self.off_u + np.arange(self.n_inputs)
        rows = np.concatenate([ii.ravel(), u_idx])
        cols = np.concatenate([jj.ravel(), u_idx])
        data = np.concatenate([blocks.ravel(), in_diag.ravel()])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_vars, self.n_vars))

    # -- problem assembly -------------------------------------------------------

    def problem(self) -> NlpProblem:
        lower, upper = self.bounds()
        return NlpProblem(
            n_vars=self.n_vars,
            objective=self.objective,
            lower=lower,
            upper=upper,
            eq_constraints=self.eq_constraints,
            ineq_constraints=self.ineq_constraints,
            n_eq=self.n_eq,
            n_ineq=self.n_ineq,
            eq_sparsity=self.eq_sparsity,
            in_sparsity=self.in_sparsity,
            hessian=self.hessian,
        )

    def initial_guess(self, X=None, U=None) -> np.ndarray:
        """Pack a state/input guess, pin the first node and set feasible slacks."""
        if X is None:
            X = np.tile(self.x0, (self.n_nodes, 1))
        if U is None:
            U = np.zeros((self.N, NU))
        X = np.array(X, dtype=float)
        X[0] = self.x0
        c, _ = self._ineq_values(X, np.asarray(U, float))
        return self.pack(X, U, np.maximum(c, 0.0))

    def slack_summary(self, z) -> dict:
        _, _, S = self.split(z)
        return {
            "collision": float(np.max(S[self.rows.collision], initial=0.0)),
            "velocity": float(np.max(S[self.rows.velocity], initial=0.0)),
            "thrust": float(np.max(S[self.rows.thrust], initial=0.0)),
        }

    def defect_norm(self, z) -> float:
        c, _ = self.eq_constraints(z)
        return float(np.max(np.abs(c[NX:]), initial=0.0))


def build_ocp(measured_state, region: ConvexRegion, spec: DockingSpec, params: ModelParams,
              footprint: Footprint | None = None) -> NlpProblem:
    """Transcribe the docking OCP into an :class:`NlpProblem`."""
    return DockingOcp(measured_state, region, spec, params, footprint).problem()
