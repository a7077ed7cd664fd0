import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqr_cbf_rrt.dynamics import (DoubleIntegrator, Trajectory, Unicycle, eval_dynamics, integrate_step,
                                  make_model, wrap_angle, wrap_angles)


def rk4(model, x, u, dt, substeps=64):
    h = dt / substeps
    x = np.array(x, float)
    for _ in range(substeps):
        k1 = eval_dynamics(model, x, u)
        k2 = eval_dynamics(model, x + 0.5 * h * k1, u)
        k3 = eval_dynamics(model, x + 0.5 * h * k2, u)
        k4 = eval_dynamics(model, x + h * k3, u)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def test_double_integrator_drift():
    np.testing.assert_array_equal(eval_dynamics(DoubleIntegrator(), [0, 1, 0, 2], [0, 0]), [1, 0, 2, 0])


def test_unicycle_examples():
    m = Unicycle()
    np.testing.assert_allclose(eval_dynamics(m, [0, 0, 0], [1, 0.5]), [1, 0, 0.5])
    np.testing.assert_allclose(eval_dynamics(m, [0, 0, math.pi / 2], [2, 0]), [0, 2, 0], atol=1e-15)


def test_euler_step_example():
    np.testing.assert_allclose(integrate_step(DoubleIntegrator(), [0, 1, 0, 0], [0, 0], 0.05), [0.05, 1, 0, 0])


def test_heading_wrapped_after_step():
    x = integrate_step(Unicycle(), [0, 0, math.pi - 0.01], [0, 1], 0.05)
    assert -math.pi < x[2] <= math.pi
    assert x[2] == pytest.approx(math.pi - 0.01 + 0.05 - 2 * math.pi)


def test_wrap_angle_range():
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    a = np.linspace(-20, 20, 1001)
    w = wrap_angles(a)
    assert np.all((w > -math.pi) & (w <= math.pi))
    np.testing.assert_allclose(np.cos(w), np.cos(a), atol=1e-12)


@pytest.mark.parametrize("model", [DoubleIntegrator(), Unicycle()], ids=lambda m: m.name)
def test_euler_consistency_and_linear_dt(model):
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.uniform(-3, 3, model.n)
        x[list(model.angle_indices)] = rng.uniform(-3, 3, len(model.angle_indices))
        u = rng.uniform(-2, 2, model.m)
        f = eval_dynamics(model, x, u)
        for dt in (0.05, 0.025):
            step = integrate_step(model, x, u, dt) - x
            step[list(model.angle_indices)] = wrap_angles(step[list(model.angle_indices)])
            np.testing.assert_allclose(step, dt * f, atol=1e-12)


@pytest.mark.parametrize("model", [DoubleIntegrator(), Unicycle()], ids=lambda m: m.name)
def test_euler_convergence_order(model):
    # local defect is O(dt^2): halving dt should quarter it, i.e. defect/dt halves
    rng = np.random.default_rng(2)
    ratios = []
    for _ in range(50):
        x = rng.uniform(-2, 2, model.n)
        u = rng.uniform(-1, 1, model.m)
        if model.is_linear:
            x[1] = x[3] = 1.0  # nonzero velocity so the position defect is not zero
            u = np.array([0.7, -0.4])
        errs = []
        for dt in (0.05, 0.025):
            d = integrate_step(model, x, u, dt) - rk4(model, x, u, dt)
            d[list(model.angle_indices)] = wrap_angles(d[list(model.angle_indices)])
            errs.append(np.linalg.norm(d) / dt)
        if errs[1] > 1e-13:
            ratios.append(errs[0] / errs[1])
    assert ratios
    assert 1.8 <= np.median(ratios) <= 2.2


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(0, 1), seed=st.integers(0, 2**31 - 1))
def test_control_affine(alpha, seed):
    rng = np.random.default_rng(seed)
    for model in (DoubleIntegrator(), Unicycle()):
        x = rng.uniform(-3, 3, model.n)
        u1, u2 = rng.uniform(-2, 2, (2, model.m))
        lhs = eval_dynamics(model, x, alpha * u1 + (1 - alpha) * u2)
        rhs = alpha * eval_dynamics(model, x, u1) + (1 - alpha) * eval_dynamics(model, x, u2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_jacobian_examples():
    A, B = DoubleIntegrator().jacobians(np.zeros(4), np.zeros(2))
    np.testing.assert_array_equal(A, [[0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 0, 0]])
    np.testing.assert_array_equal(B, [[0, 0], [1, 0], [0, 0], [0, 1]])
    m = Unicycle()
    A, B = m.jacobians(np.zeros(3), np.array([1.0, 0.0]))
    np.testing.assert_allclose(A, [[0, 0, 0], [0, 0, 1], [0, 0, 0]], atol=1e-15)
    np.testing.assert_allclose(B, [[1, 0], [0, 0], [0, 1]], atol=1e-15)
    A, B = m.jacobians(np.array([0, 0, math.pi / 2]), np.array([1.0, 0.0]))
    assert A[0, 2] == pytest.approx(-1) and A[1, 2] == pytest.approx(0, abs=1e-15)
    np.testing.assert_allclose(B, [[0, 0], [1, 0], [0, 1]], atol=1e-15)


def test_unicycle_controls_pinned():
    m = Unicycle(v_fixed=1.5)
    u = m.apply_control_limits(np.array([9.0, 0.3]))
    np.testing.assert_array_equal(u, [1.5, 0.3])
    with pytest.raises(ValueError):
        Unicycle(v_fixed=0)


def test_unicycle_lift_faces_point():
    m = Unicycle()
    x = m.lift(np.array([3.0, 4.0]), np.array([0.0, 0.0, 2.0]))
    assert x[2] == pytest.approx(math.atan2(4, 3))
    np.testing.assert_array_equal(DoubleIntegrator().lift(np.array([3.0, 4.0])), [3, 0, 4, 0])


def test_make_model_rejects_unknown():
    with pytest.raises(ValueError, match="unknown model"):
        make_model("bicycle")


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 4)), np.zeros((1, 2)), 0.05)
    t = Trajectory(np.zeros((1, 4)), np.zeros((0, 2)), 0.05)
    assert len(t) == 1 and np.array_equal(t.start, t.end)
