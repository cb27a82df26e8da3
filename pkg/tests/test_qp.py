import numpy as np
import pytest

from valueqp import qp
from valueqp.centroidal import ModelParams
from valueqp.gait import default_shoulders

from oracles import joint_kkt_solve

PARAMS = ModelParams()


def random_instance(rng, n_active=None):
    x = np.zeros(12)
    x[0:2] = rng.uniform(-0.2, 0.2, 2)
    x[2] = rng.uniform(0.18, 0.25)
    x[3:6] = rng.uniform(-0.1, 0.1, 3)
    x[6:12] = rng.uniform(-0.4, 0.4, 6)
    contacts = np.zeros(4, bool)
    if n_active is None:
        n_active = int(rng.integers(1, 5))
    contacts[rng.choice(4, size=n_active, replace=False)] = True
    points = x[0:3] + default_shoulders()
    points[:, 2] = 0.0
    points[:, 0:2] += rng.uniform(-0.05, 0.05, (4, 2))
    A = rng.normal(size=(6, 6))
    H = A @ A.T + 0.5 * np.eye(6)
    H *= rng.uniform(0.5, 50.0)
    g = rng.normal(size=6) * rng.uniform(1.0, 20.0)
    return x, contacts, points, (g, H)


def dual_certificate(problem, x, tol=1e-8):
    """Nonnegative multipliers reproducing the gradient at x.

    For a convex QP this certifies optimality even at degenerate
    vertices where the multipliers are not unique.
    """
    from scipy.optimize import nnls

    grad = problem.P @ x + problem.q
    act = np.flatnonzero(problem.G @ x - problem.h >= -1e-9)
    scale = max(1.0, float(np.max(np.abs(grad))))
    if act.size == 0:
        return float(np.max(np.abs(grad))) / scale
    lam, resid = nnls(problem.G[act].T, -grad)
    return resid / scale


def certify_optimal(problem, sol, tol=1e-8):
    """Independent joint-KKT certificate for a reported solution."""
    cols = np.flatnonzero(np.repeat(problem.active, 3))
    F_kkt, v_kkt, _ = joint_kkt_solve(problem, sol.active_set)
    # the KKT point must satisfy every inequality
    if problem.G.shape[0]:
        assert np.max(problem.G @ F_kkt - problem.h) <= tol
    scale = max(1.0, np.abs(F_kkt).max())
    assert np.max(np.abs(sol.F[cols] - F_kkt)) <= tol * scale
    assert np.max(np.abs(sol.v_next - v_kkt)) <= tol * max(1.0, np.abs(v_kkt).max())
    # dual feasibility, robust to degenerate active sets
    assert dual_certificate(problem, sol.F[cols]) <= tol


def test_matches_joint_kkt_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(300):
        x, contacts, points, pred = random_instance(rng)
        problem = qp.build_problem(
            x, contacts, points, pred, PARAMS, mu=0.6, f_z_max=30.0
        )
        sol = qp.solve_qp(problem)
        assert sol.status == qp.STATUS_OPTIMAL
        certify_optimal(problem, sol)
        res = qp.kkt_residuals(problem, sol)
        assert res["stationarity"] < 1e-7
        assert res["primal"] <= 1e-10
        assert res["complementarity"] < 1e-6


def test_constraints_hold_componentwise():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x, contacts, points, pred = random_instance(rng)
        problem = qp.build_problem(
            x, contacts, points, pred, PARAMS, mu=0.6, f_z_max=30.0
        )
        sol = qp.solve_qp(problem)
        F = sol.F.reshape(4, 3)
        for leg in range(4):
            if not contacts[leg]:
                assert np.all(F[leg] == 0.0)
                continue
            fx, fy, fz = F[leg]
            assert -1e-8 <= fz <= 30.0 + 1e-8
            assert abs(fx) <= 0.6 * fz + 1e-8
            assert abs(fy) <= 0.6 * fz + 1e-8


def test_cvxpy_cross_check():
    cvxpy = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(2)
    for _ in range(25):
        x, contacts, points, pred = random_instance(rng)
        problem = qp.build_problem(
            x, contacts, points, pred, PARAMS, mu=0.6, f_z_max=30.0
        )
        sol = qp.solve_qp(problem)

        cols = np.flatnonzero(np.repeat(contacts, 3))
        nf = cols.size
        F = cvxpy.Variable(nf)
        v = cvxpy.Variable(6)
        B = problem.B_F[:, cols]
        R_a = problem.R[np.ix_(cols, cols)]
        obj = (
            problem.g @ v
            + 0.5 * cvxpy.quad_form(v, cvxpy.psd_wrap(problem.H))
            + 0.5 * cvxpy.quad_form(F, cvxpy.psd_wrap(R_a))
        )
        cons = [v == problem.v_t + B @ F + problem.B_0]
        cons += [problem.G @ F <= problem.h]
        cp = cvxpy.Problem(cvxpy.Minimize(obj), cons)
        ref = cp.solve(solver=cvxpy.CLARABEL)
        assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-6)
        assert np.max(np.abs(sol.F[cols] - F.value)) < 1e-4


def test_flight_phase_returns_zero_forces():
    rng = np.random.default_rng(3)
    x, _, points, pred = random_instance(rng)
    contacts = np.zeros(4, bool)
    problem = qp.build_problem(
        x, contacts, points, pred, PARAMS, mu=0.6, f_z_max=30.0
    )
    sol = qp.solve_qp(problem)
    assert np.all(sol.F == 0.0)
    assert sol.status == qp.STATUS_OPTIMAL
    # ballistic velocity update
    assert np.allclose(sol.v_next, problem.v_t + problem.B_0)


def test_unconstrained_mode_matches_linear_solve():
    rng = np.random.default_rng(4)
    x, contacts, points, pred = random_instance(rng, n_active=4)
    problem = qp.build_problem(
        x, contacts, points, pred, PARAMS, mu=0.6, f_z_max=30.0,
        constrained=False,
    )
    sol = qp.solve_qp(problem)
    want = np.linalg.solve(problem.P, -problem.q)
    cols = np.flatnonzero(np.repeat(contacts, 3))
    assert np.max(np.abs(sol.F[cols] - want)) < 1e-9


def test_warm_started_solver_stays_correct():
    rng = np.random.default_rng(5)
    solver = qp.ActiveSetSolver()
    x, contacts, points, pred = random_instance(rng, n_active=2)
    for k in range(20):
        # slowly drifting state, as in consecutive control ticks
        x2 = x.copy()
        x2[6:12] += 0.01 * k
        problem = qp.build_problem(
            x2, contacts, points, pred, PARAMS, mu=0.6, f_z_max=30.0
        )
        sol = qp.solve_qp(problem, solver)
        assert sol.status == qp.STATUS_OPTIMAL
        certify_optimal(problem, sol)


def test_control_step_masks_inactive_legs():
    rng = np.random.default_rng(6)
    x, contacts, points, pred = random_instance(rng, n_active=2)
    forces, sol = qp.control_step(x, contacts, points, pred, PARAMS)
    assert np.all(forces.F[~contacts] == 0.0)
    assert np.array_equal(forces.as_vector(), sol.F)


def test_stronger_control_penalty_shrinks_forces():
    rng = np.random.default_rng(7)
    x, contacts, points, pred = random_instance(rng, n_active=4)
    small = qp.control_step(x, contacts, points, pred, PARAMS, R=1e-3 * np.eye(12))[1]
    big = qp.control_step(x, contacts, points, pred, PARAMS, R=1e3 * np.eye(12))[1]
    assert np.linalg.norm(big.F) < np.linalg.norm(small.F)


def test_fast_kernel_solutions_are_optimal():
    from valueqp import fastpath

    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(100):
        x, contacts, points, pred = random_instance(rng)
        problem = qp.build_problem(
            x, contacts, points, pred, PARAMS, mu=0.6, f_z_max=30.0
        )
        if problem.q.size == 0:
            continue
        x0 = np.zeros(problem.q.size)
        x0[2::3] = 15.0
        xf, lam, work, code, it, ok = fastpath.active_set_kernel(
            problem.P, problem.q, problem.G, problem.h, x0,
            np.zeros(0, dtype=np.int64), 200, 1e-11,
        )
        if not ok:
            continue  # caller falls back to the reference path
        assert code == 0
        assert np.max(problem.G @ xf - problem.h) <= 1e-8
        assert dual_certificate(problem, xf) <= 1e-8
        checked += 1
    assert checked > 80
