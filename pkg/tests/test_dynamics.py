import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cxsmc.astro import EnvironmentParams, gravity_j2_accel
from cxsmc.dynamics import (
    BodyParams, ControlInput, RigidBodyState, chaser_derivative, gravity_force_si, relative_rotational_dynamics,
    relative_state, relative_translational_dynamics, target_derivative,
)
from cxsmc.errors import InvalidArgumentError, InvalidInertiaError
from cxsmc.integrator import IntegratorConfig, propagate
from cxsmc.so3 import rot_z, skew, so3_exp

ENV = EnvironmentParams()
NO_GRAV = EnvironmentParams(mu=1e-30, j2=0.0)
BP = BodyParams(1000.0, np.diag([500.0, 2500.0, 2500.0]))


def body(p=(7.0e6, 0, 0), v=(0, 7.5e3, 0), B=None, omega=(0, 0, 0)):
    return RigidBodyState(np.array(p, float), np.array(v, float), np.eye(3) if B is None else B, np.array(omega, float))


def test_body_params_validation():
    with pytest.raises(InvalidArgumentError):
        BodyParams(0.0, np.eye(3))
    with pytest.raises(InvalidInertiaError):
        BodyParams(1.0, np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(InvalidInertiaError):
        BodyParams(1.0, np.array([[1.0, 0.1, 0], [0, 1, 0], [0, 0, 1]]))


def test_decoupled_limit():
    env = EnvironmentParams(j2=0.0)
    s = body()
    d = target_derivative(s, BP, env, 0.0)
    np.testing.assert_array_equal(d.p_dot, s.v)
    np.testing.assert_allclose(d.v_dot, gravity_j2_accel(s.p, env.mu_si, 0.0, 1.0))
    np.testing.assert_array_equal(d.B_dot, np.zeros((3, 3)))
    # position on a principal axis: no gravity-gradient torque
    np.testing.assert_allclose(d.omega_dot, 0.0, atol=1e-20)


def test_principal_axis_spin_is_steady():
    s = body(omega=(0.3, 0, 0))
    d = target_derivative(s, BP, NO_GRAV, 0.0)
    np.testing.assert_allclose(d.omega_dot, 0.0, atol=1e-15)


def test_torque_free_symmetric_body_keeps_spin_rate():
    bp = BodyParams(10.0, 4.0 * np.eye(3))
    s0 = body(p=(1.0, 0, 0), v=(0, 0, 0), omega=(0.1, -0.2, 0.3))
    f = lambda t, s: target_derivative(s, bp, NO_GRAV, t)
    tr = propagate(f, s0, 0.0, 100.0, IntegratorConfig(0.1))
    for s in tr.states:
        assert abs(np.linalg.norm(s.omega) - np.linalg.norm(s0.omega)) < 1e-12


def test_zero_control_matches_target_derivative():
    s = body(B=so3_exp([0.1, 0.2, 0.3]), omega=(0.01, -0.02, 0.03))
    a = target_derivative(s, BP, ENV, 5.0)
    b = chaser_derivative(s, BP, ControlInput(), ENV, 5.0)
    for name in ("p_dot", "v_dot", "omega_dot", "B_dot"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_force_cancelling_gravity_gives_zero_acceleration():
    s = body(B=so3_exp([0.4, -0.1, 0.2]), omega=(0.01, 0.0, 0.02))
    F = -s.B.T @ gravity_force_si(s.p, BP.mass, ENV)
    d = chaser_derivative(s, BP, ControlInput(force=F), ENV, 0.0)
    np.testing.assert_allclose(d.v_dot, 0.0, atol=1e-12)


def test_constant_force_impulse_response():
    s0 = body(p=(1.0, 0, 0), v=(0, 0, 0))
    u = ControlInput(force=np.array([1000.0, 0, 0]))
    f = lambda t, s: chaser_derivative(s, BP, u, NO_GRAV, t)
    s1 = propagate(f, s0, 0.0, 1.0, IntegratorConfig(0.1)).final
    np.testing.assert_allclose(s1.v, [1.0, 0, 0], atol=1e-12)


def test_relative_state_identity():
    s = body(B=so3_exp([0.3, 0.2, -0.1]), omega=(0.1, 0.2, 0.3))
    rel = relative_state(s, s)
    for x in (rel.e_p, rel.e_v, rel.e_r, rel.e_omega):
        np.testing.assert_allclose(x, 0.0, atol=1e-9)


def test_relative_state_rotated_chaser():
    t = body()
    c = body(B=rot_z(np.pi / 2))
    rel = relative_state(c, t)
    np.testing.assert_allclose(rel.e_r, [0, 0, np.pi / 2], atol=1e-12)
    # e_p = B_c^T p_c - B_c^T B_t (B_t^T p_t) = 0 for coincident positions
    np.testing.assert_allclose(rel.e_p, 0.0, atol=1e-9)
    np.testing.assert_allclose(c.B.T @ t.p, [0, -7.0e6, 0], atol=1e-6)


def test_relative_state_pure_separation():
    rel = relative_state(body(p=(7.0e6 + 5.0, 0, 0)), body())
    np.testing.assert_allclose(rel.e_p, [5.0, 0, 0], atol=1e-9)
    np.testing.assert_array_equal(rel.e_r, np.zeros(3))


@given(st.tuples(*[st.floats(-2, 2)] * 3), st.tuples(*[st.floats(-1e3, 1e3)] * 3))
def test_relative_position_frame_consistency(rv, dv):
    B = so3_exp(np.array(rv))
    t = body(B=so3_exp([0.5, -0.5, 0.1]))
    c = body(p=t.p + np.array(dv), B=B)
    rel = relative_state(c, t)
    np.testing.assert_allclose(rel.e_p, B.T @ (c.p - t.p), rtol=1e-9, atol=1e-9 * 7e6)


def test_relative_translational_dynamics_static_limit():
    s = body(p=(1.0, 0, 0), v=(0, 0, 0))
    rel = relative_state(s, s)
    acc = relative_translational_dynamics(rel, s, s, BP, BP, ControlInput(), NO_GRAV, 0.0)
    np.testing.assert_allclose(acc, 0.0, atol=1e-20)


def _pair():
    t = body(B=so3_exp([0.1, 0.3, -0.2]), omega=(0.002, -0.001, 0.003))
    c = body(p=t.p + [300.0, -200.0, 100.0], v=t.v + [0.2, 0.1, -0.3], B=so3_exp([-0.2, 0.1, 0.4]),
             omega=(-0.003, 0.002, 0.001))
    return c, t


def test_relative_translational_dynamics_matches_finite_difference():
    c0, t0 = _pair()
    bp_t = BodyParams(2000.0, np.diag([800.0, 900.0, 1000.0]))
    u = ControlInput(force=np.array([3.0, -1.0, 2.0]), torque=np.array([0.01, 0.0, -0.02]))
    cfg = IntegratorConfig(1e-3)
    fc = lambda t, s: chaser_derivative(s, BP, u, ENV, t)
    ft = lambda t, s: target_derivative(s, bp_t, ENV, t)

    def e_v(h):
        if h == 0:
            return relative_state(c0, t0).e_v
        return relative_state(propagate(fc, c0, 0, h, cfg).final, propagate(ft, t0, 0, h, cfg).final).e_v

    model = relative_translational_dynamics(relative_state(c0, t0), c0, t0, BP, bp_t, u, ENV, 0.0)
    errs = []
    for h in (0.2, 0.1):
        # one-sided three-point stencil, second order
        fd = (-3 * e_v(0) + 4 * e_v(h) - e_v(2 * h)) / (2 * h)
        errs.append(np.linalg.norm(fd - model))
    assert errs[1] < 0.3 * errs[0] or errs[1] < 1e-10
    assert errs[1] < 1e-6


def test_relative_rotational_dynamics_matches_finite_difference():
    c0, _ = _pair()
    wd = np.array([0.001, 0.002, -0.001])
    wdd = np.zeros(3)
    Bd0 = so3_exp([0.3, 0.0, 0.1])
    u = ControlInput(torque=np.array([0.05, -0.02, 0.01]))
    cfg = IntegratorConfig(1e-3)
    fc = lambda t, s: chaser_derivative(s, BP, u, ENV, t)

    def e_omega(h):
        c = propagate(fc, c0, 0, h, cfg).final if h > 0 else c0
        Bd = Bd0 @ so3_exp(h * wd)  # constant body rate desired frame
        return c.omega - c.B.T @ Bd @ wd

    h = 0.05
    fd = (-3 * e_omega(0) + 4 * e_omega(h) - e_omega(2 * h)) / (2 * h)
    B_d_c = c0.B.T @ Bd0
    rel = relative_state(c0, c0)
    rel = type(rel)(rel.e_p, rel.e_v, rel.e_r, e_omega(0))
    model = relative_rotational_dynamics(rel, c0, wd, wdd, B_d_c, BP, u, ENV, 0.0)
    np.testing.assert_allclose(model, fd, atol=1e-8)


def test_state_validation():
    with pytest.raises(InvalidArgumentError):
        body(B=2 * np.eye(3)).validate()
    with pytest.raises(InvalidArgumentError):
        body(p=(np.nan, 0, 0)).validate()
    assert skew([0, 0, 1]).shape == (3, 3)
