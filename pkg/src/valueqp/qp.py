"""One-step constrained QP over the contact forces.

The two-variable problem

    min_{F, v+}  g' v+  +  0.5 v+' H v+  +  0.5 F' R F
    s.t.         v+ = v + B_F F + B_0,
                 |F_x| <= mu F_z,  |F_y| <= mu F_z,  0 <= F_z <= f_z_max

is reduced exactly to a dense QP in the active-leg forces by
substituting the affine velocity dynamics.  Inactive-leg variables are
removed.  The solver is a primal active-set method; F = 0 is always
feasible, so the problem can never be infeasible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .centroidal import (
    NU,
    NUM_LEGS,
    NV,
    ContactForces,
    ModelParams,
    linearize_velocity_vec,
)

try:
    from . import fastpath as _fast
except ImportError:  # pragma: no cover - numba not installed
    _fast = None

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"

# one block per active leg: |Fx| <= mu Fz, |Fy| <= mu Fz, 0 <= Fz <= fmax
_LEG_ROWS = np.array(
    [
        [1.0, 0.0, -1.0],   # Fx - mu Fz <= 0  (mu scales the z column)
        [-1.0, 0.0, -1.0],
        [0.0, 1.0, -1.0],
        [0.0, -1.0, -1.0],
        [0.0, 0.0, -1.0],   # -Fz <= 0
        [0.0, 0.0, 1.0],    # Fz <= f_z_max
    ]
)


@dataclass
class QpProblem:
    """One-step QP data after eliminating the next velocity."""

    g: np.ndarray            # (6,)
    H: np.ndarray            # (6, 6) SPD
    R: np.ndarray            # (12, 12) SPD control penalty
    B_F: np.ndarray          # (6, 12)
    B_0: np.ndarray          # (6,)
    v_t: np.ndarray          # (6,)
    active: np.ndarray       # (4,) bool
    P: np.ndarray            # reduced Hessian over active forces
    q: np.ndarray            # reduced linear term
    G: np.ndarray            # (n_con, n_free) inequality rows, G x <= h
    h: np.ndarray            # (n_con,)
    const: float             # objective constant dropped by the reduction


@dataclass
class QpSolution:
    F: np.ndarray            # (12,) stacked forces, inactive legs zero
    v_next: np.ndarray       # (6,)
    objective: float
    iterations: int
    status: str
    active_set: tuple = ()
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def build_problem(
    x: np.ndarray,
    contacts: np.ndarray,
    points: np.ndarray,
    prediction: tuple[np.ndarray, np.ndarray],
    params: ModelParams,
    mu: float,
    f_z_max: float,
    R: np.ndarray | None = None,
    constrained: bool = True,
) -> QpProblem:
    """Assemble the reduced QP for one control tick.

    ``prediction`` is the PSD-projected (g, H) pair.  With
    ``constrained=False`` the pyramid and force bounds are dropped
    (constraint-ablation mode).
    """
    x = np.asarray(x, float).reshape(12)
    contacts = np.asarray(contacts, bool).reshape(NUM_LEGS)
    g, H = prediction
    g = np.asarray(g, float).reshape(NV)
    H = np.asarray(H, float).reshape(NV, NV)
    if R is None:
        R = 1e-2 * np.eye(NU)
    R = np.asarray(R, float).reshape(NU, NU)

    lin = linearize_velocity_vec(x, np.asarray(points, float), contacts, params)
    v_t = x[6:12].copy()

    cols = np.flatnonzero(np.repeat(contacts, 3))
    B = lin.B_F[:, cols]
    R_a = R[np.ix_(cols, cols)]
    v_bar = v_t + lin.B_0

    P = B.T @ H @ B + R_a
    P = 0.5 * (P + P.T)
    q = B.T @ (g + H @ v_bar)
    const = float(g @ v_bar + 0.5 * v_bar @ H @ v_bar)

    n_free = cols.size
    if constrained and n_free:
        n_act = n_free // 3
        G = np.zeros((6 * n_act, n_free))
        h = np.zeros(6 * n_act)
        rows = _LEG_ROWS.copy()
        rows[:4, 2] *= mu
        for j in range(n_act):
            G[6 * j : 6 * j + 6, 3 * j : 3 * j + 3] = rows
            h[6 * j + 5] = f_z_max
    else:
        G = np.zeros((0, n_free))
        h = np.zeros(0)

    return QpProblem(
        g=g, H=H, R=R, B_F=lin.B_F, B_0=lin.B_0, v_t=v_t, active=contacts,
        P=P, q=q, G=G, h=h, const=const,
    )


class ActiveSetSolver:
    """Primal active-set method for small dense strictly convex QPs.

    Minimizes 0.5 x' P x + q' x subject to G x <= h starting from a
    strictly feasible point.  The instance keeps the last working set
    for warm starting consecutive control ticks.
    """

    def __init__(self, max_iter: int = 200, tol: float = 1e-11):
        self.max_iter = max_iter
        self.tol = tol
        self.warm_set: tuple = ()

    def solve(
        self, P: np.ndarray, q: np.ndarray, G: np.ndarray, h: np.ndarray,
        x0: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray, tuple, str, int]:
        if _fast is not None:
            warm = np.array(self.warm_set, dtype=np.int64)
            x, lam, work, code, it, ok = _fast.active_set_kernel(
                np.ascontiguousarray(P),
                np.ascontiguousarray(q),
                np.ascontiguousarray(G),
                np.ascontiguousarray(h),
                np.ascontiguousarray(x0, dtype=float),
                warm,
                self.max_iter,
                self.tol,
            )
            if ok:
                work = tuple(int(i) for i in work)
                self.warm_set = work
                status = STATUS_OPTIMAL if code == 0 else STATUS_MAX_ITER
                return x, lam, work, status, int(it)
            # degenerate working-set system: retry on the reference path

        n = q.size
        chol = cho_factor(P, lower=True)
        x_unc = -cho_solve(chol, q)
        n_con = G.shape[0]
        if n_con == 0 or np.all(G @ x_unc <= h + 1e-12):
            return x_unc, np.zeros(n_con), (), STATUS_OPTIMAL, 0

        x = np.asarray(x0, float).copy()
        work = [i for i in self.warm_set if i < n_con]
        status = STATUS_MAX_ITER
        lam_w = np.zeros(0)
        it = 0
        for it in range(1, self.max_iter + 1):
            if work:
                Gw = G[work]
                PiGt = cho_solve(chol, Gw.T)
                M = Gw @ PiGt
                try:
                    lam_w = np.linalg.solve(M, Gw @ x_unc - h[work])
                except np.linalg.LinAlgError:
                    lam_w = np.linalg.lstsq(M, Gw @ x_unc - h[work], rcond=None)[0]
                x_eq = x_unc - PiGt @ lam_w
            else:
                lam_w = np.zeros(0)
                x_eq = x_unc

            p = x_eq - x
            if np.max(np.abs(p)) <= self.tol * max(1.0, np.max(np.abs(x))):
                if lam_w.size == 0 or np.min(lam_w) >= -self.tol:
                    status = STATUS_OPTIMAL
                    break
                drop = int(np.argmin(lam_w))
                work.pop(drop)
                lam_w = np.delete(lam_w, drop)
                continue

            # longest feasible step toward the equality-constrained optimum
            Gp = G @ p
            slack = h - G @ x
            blocking = -1
            alpha = 1.0
            for j in range(n_con):
                if j in work or Gp[j] <= self.tol:
                    continue
                a_j = slack[j] / Gp[j]
                if a_j < alpha:
                    alpha = a_j
                    blocking = j
            x = x + max(alpha, 0.0) * p
            if blocking >= 0:
                work.append(blocking)
            # alpha == 1 with no blocker: x is the working-set optimum;
            # the next round checks its multipliers

        lam = np.zeros(n_con)
        if lam_w.size == len(work):
            lam[work] = lam_w
        self.warm_set = tuple(work)
        return x, lam, tuple(work), status, it


def solve_qp(
    problem: QpProblem, solver: ActiveSetSolver | None = None
) -> QpSolution:
    """Solve the reduced QP and reconstruct the full solution."""
    solver = solver or ActiveSetSolver()
    n_free = problem.q.size
    F = np.zeros(NU)
    cols = np.flatnonzero(np.repeat(problem.active, 3))

    if n_free == 0:
        v_next = problem.v_t + problem.B_0
        obj = float(
            problem.g @ v_next + 0.5 * v_next @ problem.H @ v_next
        )
        return QpSolution(
            F=F, v_next=v_next, objective=obj, iterations=0,
            status=STATUS_OPTIMAL,
        )

    x0 = _feasible_start(problem)
    x, lam, work, status, iters = solver.solve(
        problem.P, problem.q, problem.G, problem.h, x0
    )
    F[cols] = x
    v_next = problem.v_t + problem.B_F @ F + problem.B_0
    obj = float(
        problem.g @ v_next
        + 0.5 * v_next @ problem.H @ v_next
        + 0.5 * F @ problem.R @ F
    )
    return QpSolution(
        F=F, v_next=v_next, objective=obj, iterations=iters,
        status=status, active_set=work, multipliers=lam,
    )


def _feasible_start(problem: QpProblem) -> np.ndarray:
    """Strictly feasible point: zero tangentials, mid-range normals."""
    n_free = problem.q.size
    x0 = np.zeros(n_free)
    if problem.h.size:
        f_z_max = problem.h[5::6].min() if problem.h.size >= 6 else 1.0
        x0[2::3] = 0.5 * f_z_max
    return x0


def kkt_residuals(problem: QpProblem, sol: QpSolution) -> dict:
    """Primal/stationarity/complementarity residuals of a solution."""
    cols = np.flatnonzero(np.repeat(problem.active, 3))
    x = sol.F[cols]
    grad = problem.P @ x + problem.q
    if problem.G.shape[0]:
        grad = grad + problem.G.T @ sol.multipliers
        primal = float(np.max(np.maximum(problem.G @ x - problem.h, 0.0)))
        comp = float(
            np.max(np.abs(sol.multipliers * (problem.G @ x - problem.h)))
        )
    else:
        primal = 0.0
        comp = 0.0
    scale = max(1.0, float(np.max(np.abs(problem.q))) if problem.q.size else 1.0)
    return {
        "stationarity": float(np.max(np.abs(grad))) / scale if x.size else 0.0,
        "primal": primal,
        "complementarity": comp,
    }


def control_step(
    x: np.ndarray,
    contacts: np.ndarray,
    points: np.ndarray,
    prediction: tuple[np.ndarray, np.ndarray],
    params: ModelParams,
    mu: float = 0.6,
    f_z_max: float = 30.0,
    R: np.ndarray | None = None,
    constrained: bool = True,
    solver: ActiveSetSolver | None = None,
) -> tuple[ContactForces, QpSolution]:
    """Build and solve the one-step QP for the current tick."""
    problem = build_problem(
        x, contacts, points, prediction, params, mu, f_z_max, R,
        constrained=constrained,
    )
    sol = solve_qp(problem, solver)
    forces = ContactForces(
        F=sol.F.reshape(NUM_LEGS, 3), active=np.asarray(contacts, bool)
    )
    return forces, sol
