"""Projected-Newton solver for box-constrained quadratic subproblems.

Minimizes 0.5 x' H x + q' x subject to lo <= x <= hi with H symmetric
positive definite.  The free/clamped split is recomputed each
iteration; Newton steps are taken on the free subspace with a
projected backtracking line search.  This is the per-timestep
subproblem of the control-bounded backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class NotPositiveDefiniteError(RuntimeError):
    """The Hessian's free block is not positive definite."""


@dataclass
class BoxQpResult:
    x: np.ndarray
    free: np.ndarray            # (n,) bool mask of free components
    chol_free: tuple | None     # cho_factor of H[free][:, free], None if no free dims
    iterations: int


def solve_box_qp(
    H: np.ndarray,
    q: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    x0: np.ndarray | None = None,
    max_iter: int = 100,
    grad_tol: float = 1e-10,
) -> BoxQpResult:
    n = q.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    x = np.clip(x, lo, hi)

    chol = None
    free = np.ones(n, dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        g = q + H @ x
        clamped = ((x <= lo) & (g > 0.0)) | ((x >= hi) & (g < 0.0))
        # equal bounds pin the component regardless of the gradient
        clamped |= lo >= hi
        free = ~clamped
        if not free.any():
            chol = None
            break
        if np.max(np.abs(g[free])) < grad_tol:
            chol = _factor(H, free)
            break

        chol = _factor(H, free)
        rhs = q[free] + H[np.ix_(free, clamped)] @ x[clamped]
        x_free_opt = -cho_solve(chol, rhs)
        dx = np.zeros(n)
        dx[free] = x_free_opt - x[free]

        f0 = 0.5 * x @ H @ x + q @ x
        alpha = 1.0
        x_new = x
        for _ in range(25):
            cand = np.clip(x + alpha * dx, lo, hi)
            fc = 0.5 * cand @ H @ cand + q @ cand
            if fc < f0 - 1e-8 * abs(f0) or np.allclose(cand, x):
                x_new = cand
                break
            alpha *= 0.5
        if np.array_equal(x_new, x):
            break
        x = x_new

    return BoxQpResult(x=x, free=free, chol_free=chol, iterations=it)


def _factor(H: np.ndarray, free: np.ndarray):
    try:
        return cho_factor(H[np.ix_(free, free)], lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(str(e)) from e
