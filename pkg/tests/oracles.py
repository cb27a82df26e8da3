"""Independent reference implementations used only by the tests.

Everything here is deliberately written with plain Python loops and
textbook formulas, separately from the package code, so agreement is
meaningful.
"""

import math

import numpy as np


def scalar_step(x, u, r, active, mass, inertia_diag, dt):
    """Single-body Euler step, componentwise, no numpy vector ops."""
    x = [float(v) for v in x]
    u = [float(v) for v in u]
    g = 9.81
    xn = list(x)
    # positions and angles
    for i in range(6):
        xn[i] = x[i] + dt * x[6 + i]
    # net force and torque about the CoM
    fx = fy = fz = 0.0
    tx = ty = tz = 0.0
    for leg in range(4):
        if not active[leg]:
            continue
        ux, uy, uz = u[3 * leg], u[3 * leg + 1], u[3 * leg + 2]
        ax = float(r[leg][0]) - x[0]
        ay = float(r[leg][1]) - x[1]
        az = float(r[leg][2]) - x[2]
        fx += ux
        fy += uy
        fz += uz
        tx += ay * uz - az * uy
        ty += az * ux - ax * uz
        tz += ax * uy - ay * ux
    xn[6] = x[6] + dt * (fx / mass)
    xn[7] = x[7] + dt * (fy / mass)
    xn[8] = x[8] + dt * (fz / mass - g)
    xn[9] = x[9] + dt * (tx / inertia_diag[0])
    xn[10] = x[10] + dt * (ty / inertia_diag[1])
    xn[11] = x[11] + dt * (tz / inertia_diag[2])
    return np.array(xn)


def fd_jacobians(step_fn, x, u, h=1e-6):
    """Central-difference Jacobians of a step function."""
    n = x.size
    m = u.size
    fx = np.zeros((n, n))
    fu = np.zeros((n, m))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        fx[:, j] = (step_fn(x + e, u) - step_fn(x - e, u)) / (2 * h)
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        fu[:, j] = (step_fn(x, u + e) - step_fn(x, u - e)) / (2 * h)
    return fx, fu


def riccati_lqr(A, B, Q, R, Qf, T):
    """Finite-horizon discrete Riccati recursion.

    Returns the list of cost-to-go matrices P_0..P_T and gains
    K_0..K_{T-1} for x+ = A x + B u with stage cost
    0.5 x'Qx + 0.5 u'Ru and terminal 0.5 x'Qf x.
    """
    P = [None] * (T + 1)
    K = [None] * T
    P[T] = Qf.copy()
    for t in range(T - 1, -1, -1):
        BtP = B.T @ P[t + 1]
        K[t] = np.linalg.solve(R + BtP @ B, BtP @ A)
        Acl = A - B @ K[t]
        P[t] = Q + K[t].T @ R @ K[t] + Acl.T @ P[t + 1] @ Acl
        P[t] = 0.5 * (P[t] + P[t].T)
    return P, K


def lqr_cost(A, B, Q, R, Qf, T, x0, K):
    """Roll the gains forward and accumulate the quadratic cost."""
    x = x0.copy()
    cost = 0.0
    for t in range(T):
        u = -K[t] @ x
        cost += 0.5 * (x @ Q @ x + u @ R @ u)
        x = A @ x + B @ u
    cost += 0.5 * x @ Qf @ x
    return cost, x


def joint_kkt_solve(problem, active_rows):
    """Solve the one-step QP as a joint (F, v+) equality-constrained
    KKT system, without the elimination the package performs.

    ``active_rows`` selects the inequality rows treated as equalities.
    Returns (F_active, v_next, multipliers_on_active_rows).
    """
    cols = np.flatnonzero(np.repeat(problem.active, 3))
    nf = cols.size
    nv = 6
    R_a = problem.R[np.ix_(cols, cols)]
    B = problem.B_F[:, cols]
    v_bar = problem.v_t + problem.B_0
    Ga = problem.G[list(active_rows)]
    na = Ga.shape[0]

    # unknowns: [F (nf), v+ (nv), nu_eq (nv), lambda_act (na)]
    dim = nf + nv + nv + na
    Kmat = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    # stationarity wrt F: R F - B' nu + Ga' lam = 0
    Kmat[:nf, :nf] = R_a
    Kmat[:nf, nf + nv : nf + 2 * nv] = -B.T
    if na:
        Kmat[:nf, nf + 2 * nv :] = Ga.T
    # stationarity wrt v+: H v+ + g + nu = 0
    Kmat[nf : nf + nv, nf : nf + nv] = problem.H
    Kmat[nf : nf + nv, nf + nv : nf + 2 * nv] = np.eye(nv)
    rhs[nf : nf + nv] = -problem.g
    # dynamics: v+ - B F = v_bar
    Kmat[nf + nv : nf + 2 * nv, :nf] = -B
    Kmat[nf + nv : nf + 2 * nv, nf : nf + nv] = np.eye(nv)
    rhs[nf + nv : nf + 2 * nv] = v_bar
    # active inequalities as equalities: Ga F = h_a
    if na:
        Kmat[nf + 2 * nv :, :nf] = Ga
        rhs[nf + 2 * nv :] = problem.h[list(active_rows)]

    # lstsq tolerates a degenerate active set (dependent pyramid rows);
    # the (F, v+) block is still unique because the objective is strictly
    # convex
    sol = np.linalg.lstsq(Kmat, rhs, rcond=None)[0]
    return sol[:nf], sol[nf : nf + nv], sol[nf + 2 * nv :]
