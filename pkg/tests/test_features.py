import numpy as np
import pytest

from valueqp import features as ft


def random_expansion(rng):
    V_x = rng.normal(size=12) * 10
    A = rng.normal(size=(12, 12))
    V_xx = A @ A.T + 0.1 * np.eye(12)
    x_next = rng.normal(size=12)
    s_next = rng.normal(size=6)
    return V_x, V_xx, x_next, s_next


def test_feature_layout():
    x = np.arange(12.0)
    points = np.arange(12.0).reshape(4, 3) * 0.1
    contacts = [True, False, True, False]
    times = np.array([0.1, 0.2, 0.3, 0.4])
    v_cmd = np.array([0.5, -0.5, 0.0])
    phi = ft.featurize(x, contacts, points, times, v_cmd)

    assert phi.shape == (33,)
    assert phi[0] == x[2]
    assert np.array_equal(phi[1:10], x[3:12])
    rel = (points - x[0:3]).reshape(12)
    assert np.array_equal(phi[10:22], rel)
    assert np.array_equal(phi[22:26], [1.0, 0.0, 1.0, 0.0])
    assert np.array_equal(phi[26:29], v_cmd)
    assert np.array_equal(phi[29:33], times)


def test_feature_ignores_horizontal_position():
    rng = np.random.default_rng(0)
    x = rng.normal(size=12)
    points = x[0:3] + rng.normal(size=(4, 3))
    times = rng.uniform(0.01, 0.2, 4)
    v_cmd = rng.normal(size=3)
    phi = ft.featurize(x, np.ones(4, bool), points, times, v_cmd)

    shift = np.array([1.7, -2.3, 0.0])
    x2 = x.copy()
    x2[0:3] += shift
    phi2 = ft.featurize(x2, np.ones(4, bool), points + shift, times, v_cmd)
    assert np.allclose(phi, phi2)


def test_target_vector_roundtrip():
    rng = np.random.default_rng(1)
    g = rng.normal(size=6)
    H = rng.normal(size=(6, 6))
    tv = ft.TargetVector(g=g, H=H)
    y = tv.to_vector()
    assert y.shape == (42,)
    back = ft.TargetVector.from_vector(y)
    assert np.array_equal(back.g, g)
    assert np.array_equal(back.H, H)


def test_reduction_reproduces_quadratic_model():
    """g and H must describe the full second-order value model as a
    function of the next velocity once the next position is known."""
    rng = np.random.default_rng(2)
    for _ in range(100):
        V_x, V_xx, x_next, s_next = random_expansion(rng)
        tv = ft.reduce_expansion(V_x, V_xx, x_next, s_next)

        def full_model(v):
            x = np.concatenate([s_next, v])
            dx = x - x_next
            return V_x @ dx + 0.5 * dx @ V_xx @ dx

        def reduced_model(v):
            return tv.g @ v + 0.5 * v @ tv.H @ v

        # difference must be constant in v
        v_ref = rng.normal(size=6)
        offset = full_model(v_ref) - reduced_model(v_ref)
        for _ in range(5):
            v = rng.normal(size=6) * 3
            diff = full_model(v) - reduced_model(v)
            assert diff == pytest.approx(offset, rel=1e-9, abs=1e-8)


def test_reduction_argmin_matches_dense_solve():
    rng = np.random.default_rng(3)
    for _ in range(50):
        V_x, V_xx, x_next, s_next = random_expansion(rng)
        tv = ft.reduce_expansion(V_x, V_xx, x_next, s_next)
        v_star = np.linalg.solve(tv.H, -tv.g)
        # independent route: minimize the full model over v directly
        dx_s = s_next - x_next[:6]
        grad_const = V_x[6:] + V_xx[6:, :6] @ dx_s - V_xx[6:, 6:] @ x_next[6:]
        v_ref = np.linalg.solve(V_xx[6:, 6:], -grad_const)
        assert np.max(np.abs(v_star - v_ref)) < 1e-8


def test_reduction_translation_invariance():
    rng = np.random.default_rng(4)
    V_x, V_xx, x_next, s_next = random_expansion(rng)
    tv = ft.reduce_expansion(V_x, V_xx, x_next, s_next)
    shift = np.array([3.1, -0.7, 0.0, 0.0, 0.0, 0.0])
    x2 = x_next.copy()
    x2[:6] += shift
    tv2 = ft.reduce_expansion(V_x, V_xx, x2, s_next + shift)
    assert np.allclose(tv.g, tv2.g)
    assert np.array_equal(tv.H, tv2.H)
