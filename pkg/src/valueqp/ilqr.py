"""Control-bounded iLQR solver over generic discrete dynamics.

Gauss-Newton variant: the backward pass uses first-order dynamics
expansions only (no second-order dynamics tensors).  Control bounds
are handled inside the backward pass by solving each step's
box-constrained quadratic subproblem; gain rows of clamped components
are zeroed.

The solver exposes the per-timestep second-order value expansions
(V_x, V_xx) about the returned nominal trajectory, which downstream
modules reduce into one-step QP data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from .boxqp import NotPositiveDefiniteError, solve_box_qp

try:
    from . import fastpath as _fast
except ImportError:  # pragma: no cover - numba not installed
    _fast = None


@dataclass
class OcProblem:
    """Discrete-time optimal control problem with control bounds.

    All callbacks take the step index first.  ``u_lower``/``u_upper``
    are (T, m) arrays; use +-inf for unbounded components.
    """

    horizon: int
    n: int
    m: int
    dynamics: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    dynamics_jac: Callable[[int, np.ndarray, np.ndarray], tuple]
    cost: Callable[[int, np.ndarray, np.ndarray], float]
    cost_derivs: Callable[[int, np.ndarray, np.ndarray], tuple]
    terminal_cost: Callable[[np.ndarray], float]
    terminal_derivs: Callable[[np.ndarray], tuple]
    u_lower: np.ndarray
    u_upper: np.ndarray
    # optional vectorized variants over whole trajectories; the scalar
    # callbacks are used when these are None
    dynamics_jac_all: Callable | None = None
    cost_derivs_all: Callable | None = None
    cost_all: Callable | None = None
    # optional whole-trajectory rollout under the affine control update:
    # (xs, us, K, k, alpha) -> (xs_new, us_new, cost), cost = inf on a
    # non-finite rollout
    forward_all: Callable | None = None

    def __post_init__(self) -> None:
        self.u_lower = np.broadcast_to(
            np.asarray(self.u_lower, float), (self.horizon, self.m)
        ).copy()
        self.u_upper = np.broadcast_to(
            np.asarray(self.u_upper, float), (self.horizon, self.m)
        ).copy()
        if np.any(self.u_lower > self.u_upper):
            raise ValueError("control lower bounds exceed upper bounds")


@dataclass
class ValueExpansion:
    """Local value-function gradient and Hessian at one timestep."""

    V_x: np.ndarray
    V_xx: np.ndarray


@dataclass
class IlqrOptions:
    max_iters: int = 100
    cost_tol: float = 1e-7
    reg_init: float = 0.0
    reg_min: float = 1e-6
    reg_factor: float = 10.0
    reg_max: float = 1e6
    alphas: tuple = (1.0, 0.5, 0.25, 0.125, 1.0 / 16, 1.0 / 32, 1.0 / 64)


@dataclass
class SolveResult:
    xs: np.ndarray              # (T+1, n)
    us: np.ndarray              # (T, m)
    V_x: np.ndarray             # (T+1, n)
    V_xx: np.ndarray            # (T+1, n, n)
    K: np.ndarray               # (T, m, n) feedback gains
    k: np.ndarray               # (T, m) feedforward
    cost_history: list[float]
    converged: bool
    iterations: int

    def expansion(self, t: int) -> ValueExpansion:
        return ValueExpansion(V_x=self.V_x[t], V_xx=self.V_xx[t])


@dataclass
class BackwardPassResult:
    V_x: np.ndarray
    V_xx: np.ndarray
    K: np.ndarray
    k: np.ndarray
    dv1: float = 0.0   # sum k' Q_u
    dv2: float = 0.0   # sum 0.5 k' Q_uu k


def rollout(
    problem: OcProblem, x0: np.ndarray, us: np.ndarray
) -> tuple[np.ndarray, float]:
    T = problem.horizon
    if problem.forward_all is not None:
        xs_nom = np.zeros((T + 1, problem.n))
        xs_nom[0] = x0
        K0 = np.zeros((T, problem.m, problem.n))
        k0 = np.zeros((T, problem.m))
        xs, _, cost = problem.forward_all(xs_nom, us, K0, k0, 0.0)
        return xs, float(cost)
    xs = np.empty((T + 1, problem.n))
    xs[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            xs[t + 1] = problem.dynamics(t, xs[t], us[t])
        cost = trajectory_cost(problem, xs, us)
    return xs, cost


def trajectory_cost(problem: OcProblem, xs: np.ndarray, us: np.ndarray) -> float:
    if problem.cost_all is not None:
        running = problem.cost_all(xs[:-1], us)
    else:
        running = sum(
            problem.cost(t, xs[t], us[t]) for t in range(problem.horizon)
        )
    return float(running + problem.terminal_cost(xs[-1]))


def backward_pass(
    xs: np.ndarray,
    us: np.ndarray,
    problem: OcProblem,
    regularization: float = 0.0,
) -> BackwardPassResult:
    """Run the value recursion along (xs, us).

    Raises NotPositiveDefiniteError when Q_uu (after adding
    ``regularization`` * I) fails its Cholesky factorization; the
    caller reacts by increasing the regularization.
    """
    T, n, m = problem.horizon, problem.n, problem.m

    if (
        _fast is not None
        and problem.dynamics_jac_all is not None
        and problem.cost_derivs_all is not None
    ):
        fx_all, fu_all = problem.dynamics_jac_all(xs[:-1], us)
        lx, lu, lxx, luu, lux = problem.cost_derivs_all(xs[:-1], us)
        lxT, lxxT = problem.terminal_derivs(xs[T])
        V_x, V_xx, K, k, dv1, dv2, ok = _fast.backward_kernel(
            np.ascontiguousarray(fx_all),
            np.ascontiguousarray(fu_all),
            np.ascontiguousarray(lx),
            np.ascontiguousarray(lu),
            np.ascontiguousarray(lxx),
            np.ascontiguousarray(luu),
            np.ascontiguousarray(lux),
            np.ascontiguousarray(lxT, dtype=float),
            np.ascontiguousarray(lxxT, dtype=float),
            np.ascontiguousarray(problem.u_lower - us),
            np.ascontiguousarray(problem.u_upper - us),
            float(regularization),
        )
        if not ok:
            raise NotPositiveDefiniteError(
                "Q_uu not positive definite in backward pass"
            )
        return BackwardPassResult(V_x=V_x, V_xx=V_xx, K=K, k=k, dv1=dv1, dv2=dv2)

    V_x = np.empty((T + 1, n))
    V_xx = np.empty((T + 1, n, n))
    K = np.zeros((T, m, n))
    k = np.zeros((T, m))

    lxT, lxxT = problem.terminal_derivs(xs[T])
    V_x[T] = lxT
    V_xx[T] = 0.5 * (lxxT + lxxT.T)

    if problem.dynamics_jac_all is not None:
        fx_all, fu_all = problem.dynamics_jac_all(xs[:-1], us)
    else:
        fx_all = fu_all = None
    if problem.cost_derivs_all is not None:
        lx_all, lu_all, lxx_all, luu_all, lux_all = problem.cost_derivs_all(
            xs[:-1], us
        )
    else:
        lx_all = None

    reg_eye = regularization * np.eye(m)
    dv1 = 0.0
    dv2 = 0.0
    for t in range(T - 1, -1, -1):
        if fx_all is not None:
            fx, fu = fx_all[t], fu_all[t]
        else:
            fx, fu = problem.dynamics_jac(t, xs[t], us[t])
        if lx_all is not None:
            lx, lu, lxx, luu, lux = (
                lx_all[t], lu_all[t], lxx_all[t], luu_all[t], lux_all[t]
            )
        else:
            lx, lu, lxx, luu, lux = problem.cost_derivs(t, xs[t], us[t])

        Vx1 = V_x[t + 1]
        Vxx1 = V_xx[t + 1]
        fxT = fx.T
        fuT = fu.T
        Q_x = lx + fxT @ Vx1
        Q_u = lu + fuT @ Vx1
        VF = Vxx1 @ fx
        Q_xx = lxx + fxT @ VF
        Q_ux = lux + fuT @ VF
        Q_uu = luu + fuT @ (Vxx1 @ fu)
        Q_uu = 0.5 * (Q_uu + Q_uu.T)

        lo = problem.u_lower[t] - us[t]
        hi = problem.u_upper[t] - us[t]
        res = solve_box_qp(Q_uu + reg_eye, Q_u, lo, hi)
        k_t = res.x
        K_t = np.zeros((m, n))
        if res.free.any() and res.chol_free is not None:
            K_t[res.free] = -cho_solve(res.chol_free, Q_ux[res.free])

        k[t] = k_t
        K[t] = K_t
        dv1 += k_t @ Q_u
        dv2 += 0.5 * k_t @ Q_uu @ k_t

        KtQuu = K_t.T @ Q_uu
        V_x[t] = Q_x + KtQuu @ k_t + K_t.T @ Q_u + Q_ux.T @ k_t
        Vxx_t = Q_xx + KtQuu @ K_t + K_t.T @ Q_ux + Q_ux.T @ K_t
        V_xx[t] = 0.5 * (Vxx_t + Vxx_t.T)

    return BackwardPassResult(V_x=V_x, V_xx=V_xx, K=K, k=k, dv1=dv1, dv2=dv2)


def forward_pass(
    problem: OcProblem,
    xs: np.ndarray,
    us: np.ndarray,
    K: np.ndarray,
    k: np.ndarray,
    alpha: float,
) -> tuple[np.ndarray, np.ndarray, float] | None:
    """Roll out the nonlinear dynamics under the updated control law.

    Controls are clamped to the bounds componentwise.  Returns None
    when the rollout produces non-finite states (rejected step).
    """
    T = problem.horizon
    if problem.forward_all is not None:
        xs_new, us_new, cost = problem.forward_all(xs, us, K, k, alpha)
        if not np.isfinite(cost):
            return None
        return xs_new, us_new, float(cost)
    xs_new = np.empty_like(xs)
    us_new = np.empty_like(us)
    xs_new[0] = xs[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            du = alpha * k[t] + K[t] @ (xs_new[t] - xs[t])
            us_new[t] = np.clip(
                us[t] + du, problem.u_lower[t], problem.u_upper[t]
            )
            xs_new[t + 1] = problem.dynamics(t, xs_new[t], us_new[t])
            if not np.all(np.isfinite(xs_new[t + 1])):
                return None
        cost = trajectory_cost(problem, xs_new, us_new)
    if not np.isfinite(cost):
        return None
    return xs_new, us_new, cost


def solve(
    problem: OcProblem,
    x0: np.ndarray,
    us_init: np.ndarray,
    options: IlqrOptions | None = None,
) -> SolveResult:
    """Alternate backward/forward passes until convergence.

    A step is accepted only when the cost strictly decreases.
    Convergence is declared when the backward pass's expected
    improvement (or an accepted step's actual improvement) drops below
    the relative cost tolerance.  The returned expansions and gains
    come from a backward pass evaluated on the final accepted
    trajectory.
    """
    opts = options or IlqrOptions()
    us = np.asarray(us_init, dtype=float).copy()
    if us.shape != (problem.horizon, problem.m):
        raise ValueError(
            f"initial guess must be ({problem.horizon}, {problem.m}), got {us.shape}"
        )
    xs, cost = rollout(problem, x0, us)
    if not np.isfinite(cost):
        raise ValueError("initial rollout produced non-finite cost")

    reg = opts.reg_init
    cost_history = [cost]
    converged = False
    iterations = 0
    bp: BackwardPassResult | None = None
    bp_current = False  # whether bp matches the current (xs, us)

    for _ in range(opts.max_iters):
        try:
            bp = backward_pass(xs, us, problem, reg)
            bp_current = True
        except NotPositiveDefiniteError:
            reg = max(opts.reg_min, reg * opts.reg_factor)
            if reg > opts.reg_max:
                break
            continue

        expected = -(bp.dv1 + bp.dv2)
        if expected < opts.cost_tol * max(1.0, abs(cost)):
            converged = True
            break

        accepted = False
        for alpha in opts.alphas:
            fp = forward_pass(problem, xs, us, bp.K, bp.k, alpha)
            if fp is None:
                continue
            xs_new, us_new, new_cost = fp
            if new_cost < cost:
                improvement = cost - new_cost
                xs, us, cost = xs_new, us_new, new_cost
                cost_history.append(cost)
                iterations += 1
                bp_current = False
                reg = reg / 2.0 if reg > opts.reg_min else 0.0
                accepted = True
                if improvement < opts.cost_tol * max(1.0, abs(cost)):
                    converged = True
                break
        if converged:
            break
        if not accepted:
            reg = max(opts.reg_min, reg * opts.reg_factor)
            if reg > opts.reg_max:
                break

    if bp is None or not bp_current:
        try:
            bp = backward_pass(xs, us, problem, 0.0)
        except NotPositiveDefiniteError:
            bp = backward_pass(xs, us, problem, max(reg, opts.reg_min))

    return SolveResult(
        xs=xs,
        us=us,
        V_x=bp.V_x,
        V_xx=bp.V_xx,
        K=bp.K,
        k=bp.k,
        cost_history=cost_history,
        converged=converged,
        iterations=iterations,
    )
