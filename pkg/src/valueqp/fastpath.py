"""Numba kernels for the solver hot loops.

The backward-pass kernel implements exactly the same recursion and
box-constrained subproblem as the pure-Python path in :mod:`ilqr`; it
operates on precomputed Jacobian/cost-derivative arrays, so it is only
used for problems that provide the vectorized callbacks.  The rollout
kernel is specific to the centroidal tracking problem built by
:mod:`dataset`.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _chol(A):
    """Lower Cholesky factor; ok=False when A is not positive definite."""
    n = A.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            if i == j:
                if s <= 0.0:
                    return L, False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L, True


@nb.njit(cache=True)
def _chol_solve(L, b):
    n = L.shape[0]
    y = b.copy()
    for i in range(n):
        for p in range(i):
            y[i] -= L[i, p] * y[p]
        y[i] /= L[i, i]
    for i in range(n - 1, -1, -1):
        for p in range(i + 1, n):
            y[i] -= L[p, i] * y[p]
        y[i] /= L[i, i]
    return y


@nb.njit(cache=True)
def _box_qp(H, q, lo, hi):
    """Projected-Newton box QP; mirrors boxqp.solve_box_qp."""
    m = q.shape[0]
    x = np.zeros(m)
    for i in range(m):
        if x[i] < lo[i]:
            x[i] = lo[i]
        elif x[i] > hi[i]:
            x[i] = hi[i]
    free = np.empty(m, np.bool_)
    for _ in range(100):
        g = q + H @ x
        nfree = 0
        for i in range(m):
            clamped = (
                lo[i] >= hi[i]
                or (x[i] <= lo[i] and g[i] > 0.0)
                or (x[i] >= hi[i] and g[i] < 0.0)
            )
            free[i] = not clamped
            if free[i]:
                nfree += 1
        if nfree == 0:
            return x, free, True
        gmax = 0.0
        for i in range(m):
            if free[i] and abs(g[i]) > gmax:
                gmax = abs(g[i])
        if gmax < 1e-10:
            return x, free, True

        idx = np.empty(nfree, np.int64)
        a = 0
        for i in range(m):
            if free[i]:
                idx[a] = i
                a += 1
        Hff = np.empty((nfree, nfree))
        qf = np.empty(nfree)
        for a in range(nfree):
            qf[a] = q[idx[a]]
            for b in range(nfree):
                Hff[a, b] = H[idx[a], idx[b]]
            for i in range(m):
                if not free[i]:
                    qf[a] += H[idx[a], i] * x[i]
        L, ok = _chol(Hff)
        if not ok:
            return x, free, False
        xf = _chol_solve(L, -qf)
        dx = np.zeros(m)
        for a in range(nfree):
            dx[idx[a]] = xf[a] - x[idx[a]]

        f0 = 0.5 * x @ H @ x + q @ x
        alpha = 1.0
        improved = False
        for _ in range(25):
            xc = x + alpha * dx
            for i in range(m):
                if xc[i] < lo[i]:
                    xc[i] = lo[i]
                elif xc[i] > hi[i]:
                    xc[i] = hi[i]
            fc = 0.5 * xc @ H @ xc + q @ xc
            if fc < f0 - 1e-8 * abs(f0):
                x = xc
                improved = True
                break
            alpha *= 0.5
        if not improved:
            return x, free, True
    return x, free, True


@nb.njit(cache=True)
def _gauss_solve(A, b):
    """Gaussian elimination with partial pivoting; ok=False if singular."""
    n = b.shape[0]
    M = A.copy()
    x = b.copy()
    scale = 1e-300
    for r in range(n):
        for c in range(n):
            if abs(M[r, c]) > scale:
                scale = abs(M[r, c])
    for col in range(n):
        piv = col
        best = abs(M[col, col])
        for r in range(col + 1, n):
            if abs(M[r, col]) > best:
                best = abs(M[r, col])
                piv = r
        if best < 1e-12 * scale:
            return x, False
        if piv != col:
            for c in range(n):
                tmp = M[col, c]
                M[col, c] = M[piv, c]
                M[piv, c] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        for r in range(col + 1, n):
            f = M[r, col] / M[col, col]
            if f != 0.0:
                for c in range(col, n):
                    M[r, c] -= f * M[col, c]
                x[r] -= f * x[col]
    for r in range(n - 1, -1, -1):
        s = x[r]
        for c in range(r + 1, n):
            s -= M[r, c] * x[c]
        x[r] = s / M[r, r]
    return x, True


@nb.njit(cache=True)
def active_set_kernel(P, q, G, h, x0, warm, max_iter, tol):
    """Primal active-set QP; mirrors qp.ActiveSetSolver.solve.

    Returns (x, lam, work, status, iterations, ok); ok=False asks the
    caller to fall back to the reference path (non-PD Hessian or a
    singular working-set system).
    """
    n = q.shape[0]
    n_con = G.shape[0]
    lam = np.zeros(n_con)
    work = np.empty(n_con if n_con else 1, np.int64)
    nw = 0

    L, okc = _chol(P)
    if not okc:
        return x0, lam, work[:0], 1, 0, False
    x_unc = -_chol_solve(L, q)

    feasible = True
    for j in range(n_con):
        s = 0.0
        for c in range(n):
            s += G[j, c] * x_unc[c]
        if s > h[j] + 1e-12:
            feasible = False
            break
    if n_con == 0 or feasible:
        return x_unc, lam, work[:0], 0, 0, True

    in_work = np.zeros(n_con, np.bool_)
    for i in range(warm.shape[0]):
        if warm[i] < n_con and not in_work[warm[i]]:
            work[nw] = warm[i]
            in_work[warm[i]] = True
            nw += 1

    x = x0.copy()
    lam_w = np.zeros(n_con)
    status = 1
    it = 0
    for it in range(1, max_iter + 1):
        x_eq = x_unc.copy()
        if nw > 0:
            PiGt = np.empty((n, nw))
            for i in range(nw):
                col = _chol_solve(L, np.ascontiguousarray(G[work[i]]))
                for c in range(n):
                    PiGt[c, i] = col[c]
            M = np.empty((nw, nw))
            rhs = np.empty(nw)
            for i in range(nw):
                wi = work[i]
                s = 0.0
                for c in range(n):
                    s += G[wi, c] * x_unc[c]
                rhs[i] = s - h[wi]
                for j in range(nw):
                    s2 = 0.0
                    for c in range(n):
                        s2 += G[wi, c] * PiGt[c, j]
                    M[i, j] = s2
            sol, oks = _gauss_solve(M, rhs)
            if not oks:
                return x, lam, work[:nw], 1, it, False
            for i in range(nw):
                lam_w[i] = sol[i]
            for c in range(n):
                s = 0.0
                for i in range(nw):
                    s += PiGt[c, i] * lam_w[i]
                x_eq[c] -= s

        pmax = 0.0
        xmax = 0.0
        for c in range(n):
            if abs(x_eq[c] - x[c]) > pmax:
                pmax = abs(x_eq[c] - x[c])
            if abs(x[c]) > xmax:
                xmax = abs(x[c])
        if pmax <= tol * max(1.0, xmax):
            lmin = 0.0
            imin = -1
            for i in range(nw):
                if lam_w[i] < lmin:
                    lmin = lam_w[i]
                    imin = i
            if imin < 0 or lmin >= -tol:
                status = 0
                break
            in_work[work[imin]] = False
            for i in range(imin, nw - 1):
                work[i] = work[i + 1]
                lam_w[i] = lam_w[i + 1]
            nw -= 1
            continue

        # longest feasible step toward the equality-constrained optimum
        blocking = -1
        alpha = 1.0
        for j in range(n_con):
            if in_work[j]:
                continue
            gp = 0.0
            gx = 0.0
            for c in range(n):
                gp += G[j, c] * (x_eq[c] - x[c])
                gx += G[j, c] * x[c]
            if gp <= tol:
                continue
            a_j = (h[j] - gx) / gp
            if a_j < alpha:
                alpha = a_j
                blocking = j
        if alpha < 0.0:
            alpha = 0.0
        for c in range(n):
            x[c] = x[c] + alpha * (x_eq[c] - x[c])
        if blocking >= 0:
            work[nw] = blocking
            in_work[blocking] = True
            nw += 1

    for i in range(nw):
        lam[work[i]] = lam_w[i]
    return x, lam, work[:nw], status, it, True


@nb.njit(cache=True)
def backward_kernel(fx, fu, lx, lu, lxx, luu, lux, VxT, VxxT, lo, hi, reg):
    """Value recursion over precomputed derivative arrays.

    Returns (Vx, Vxx, K, kff, dv1, dv2, ok); ok=False signals a
    Q_uu block that is not positive definite under ``reg``.
    """
    T = lx.shape[0]
    n = lx.shape[1]
    m = lu.shape[1]
    Vx = np.zeros((T + 1, n))
    Vxx = np.zeros((T + 1, n, n))
    K = np.zeros((T, m, n))
    kff = np.zeros((T, m))
    Vx[T] = VxT
    Vxx[T] = 0.5 * (VxxT + VxxT.T)
    dv1 = 0.0
    dv2 = 0.0
    for t in range(T - 1, -1, -1):
        A = np.ascontiguousarray(fx[t])
        B = np.ascontiguousarray(fu[t])
        At = np.ascontiguousarray(A.T)
        Bt = np.ascontiguousarray(B.T)
        Qx = lx[t] + At @ Vx[t + 1]
        Qu = lu[t] + Bt @ Vx[t + 1]
        VF = Vxx[t + 1] @ A
        Qxx = lxx[t] + At @ VF
        Qux = lux[t] + Bt @ VF
        Quu = luu[t] + Bt @ (Vxx[t + 1] @ B)
        Quu = 0.5 * (Quu + Quu.T)
        Quu_reg = Quu.copy()
        for i in range(m):
            Quu_reg[i, i] += reg

        k_t, free, ok = _box_qp(Quu_reg, Qu, lo[t], hi[t])
        if not ok:
            return Vx, Vxx, K, kff, dv1, dv2, False

        K_t = np.zeros((m, n))
        nfree = 0
        for i in range(m):
            if free[i]:
                nfree += 1
        if nfree > 0:
            idx = np.empty(nfree, np.int64)
            a = 0
            for i in range(m):
                if free[i]:
                    idx[a] = i
                    a += 1
            Hff = np.empty((nfree, nfree))
            for a in range(nfree):
                for b in range(nfree):
                    Hff[a, b] = Quu_reg[idx[a], idx[b]]
            L, ok = _chol(Hff)
            if not ok:
                return Vx, Vxx, K, kff, dv1, dv2, False
            col = np.empty(nfree)
            for j in range(n):
                for a in range(nfree):
                    col[a] = Qux[idx[a], j]
                sol = _chol_solve(L, col)
                for a in range(nfree):
                    K_t[idx[a], j] = -sol[a]

        kff[t] = k_t
        K[t] = K_t
        dv1 += k_t @ Qu
        dv2 += 0.5 * k_t @ (Quu @ k_t)

        Kt_T = np.ascontiguousarray(K_t.T)
        Quk = Quu @ k_t
        Vx[t] = Qx + Kt_T @ Quk + Kt_T @ Qu + np.ascontiguousarray(Qux.T) @ k_t
        M = Qxx + Kt_T @ (Quu @ K_t) + Kt_T @ Qux + np.ascontiguousarray(Qux.T) @ K_t
        Vxx[t] = 0.5 * (M + M.T)
    return Vx, Vxx, K, kff, dv1, dv2, True


@nb.njit(cache=True)
def centroidal_forward_kernel(
    xs_nom, us_nom, K, kff, alpha, lo, hi, points, active,
    dt, mass, Iinv, w, x_des, r_pen,
):
    """Closed-loop rollout of the centroidal tracking problem.

    Returns (xs, us, cost); cost = inf marks a non-finite rollout.
    With K = 0, kff = 0 this is the plain open-loop rollout.
    """
    T = us_nom.shape[0]
    xs = np.empty((T + 1, 12))
    us = np.empty((T, 12))
    xs[0] = xs_nom[0]
    cost = 0.0
    for t in range(T):
        dxv = xs[t] - xs_nom[t]
        u = us_nom[t] + alpha * kff[t] + K[t] @ dxv
        for i in range(12):
            if u[i] < lo[t, i]:
                u[i] = lo[t, i]
            elif u[i] > hi[t, i]:
                u[i] = hi[t, i]
        us[t] = u

        for i in range(12):
            d = xs[t, i] - x_des[i]
            cost += 0.5 * w[i] * d * d + 0.5 * r_pen * u[i] * u[i]

        xn = xs[t].copy()
        for i in range(6):
            xn[i] += dt * xs[t, 6 + i]
        fx = 0.0
        fy = 0.0
        fz = 0.0
        tx = 0.0
        ty = 0.0
        tz = 0.0
        for leg in range(4):
            if active[t, leg]:
                ux = u[3 * leg]
                uy = u[3 * leg + 1]
                uz = u[3 * leg + 2]
                ax = points[t, leg, 0] - xs[t, 0]
                ay = points[t, leg, 1] - xs[t, 1]
                az = points[t, leg, 2] - xs[t, 2]
                fx += ux
                fy += uy
                fz += uz
                tx += ay * uz - az * uy
                ty += az * ux - ax * uz
                tz += ax * uy - ay * ux
        xn[6] += dt * (fx / mass)
        xn[7] += dt * (fy / mass)
        xn[8] += dt * (fz / mass - 9.81)
        xn[9] += dt * (Iinv[0, 0] * tx + Iinv[0, 1] * ty + Iinv[0, 2] * tz)
        xn[10] += dt * (Iinv[1, 0] * tx + Iinv[1, 1] * ty + Iinv[1, 2] * tz)
        xn[11] += dt * (Iinv[2, 0] * tx + Iinv[2, 1] * ty + Iinv[2, 2] * tz)
        for i in range(12):
            if not np.isfinite(xn[i]):
                return xs, us, np.inf
        xs[t + 1] = xn
    for i in range(12):
        d = xs[T, i] - x_des[i]
        cost += 0.5 * w[i] * d * d
    if not np.isfinite(cost):
        return xs, us, np.inf
    return xs, us, cost
