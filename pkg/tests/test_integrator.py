import numpy as np
import pytest

from cxsmc.astro import (
    EnvironmentParams, OrbitalElements, cartesian_to_elements, elements_to_cartesian, orbital_period,
)
from cxsmc.dynamics import BodyParams, RigidBodyState, state_from_elements, target_derivative
from cxsmc.errors import IntegrationError, InvalidArgumentError
from cxsmc.integrator import (
    EXP_MAP, MATRIX_ODE, IntegratorConfig, apply_impulse, locate_event, propagate, rk4_step,
)
from cxsmc.so3 import orthonormality_error, so3_exp

TWO_BODY = EnvironmentParams(j2=0.0)
BP = BodyParams(1000.0, np.diag([500.0, 2500.0, 2500.0]))


def kepler_rhs(t, x, mu=TWO_BODY.mu_si):
    r = x[:3]
    return np.r_[x[3:], -mu * r / np.linalg.norm(r) ** 3]


def kepler_reference(x0, t):
    # Kepler's equation solved by Newton on the eccentric anomaly
    el = cartesian_to_elements(x0[:3] / 1e3, x0[3:] / 1e3, TWO_BODY)
    e, a = el.eccentricity, el.semi_major_axis
    E0 = 2 * np.arctan(np.sqrt((1 - e) / (1 + e)) * np.tan(el.true_anomaly / 2))
    M = E0 - e * np.sin(E0) + np.sqrt(TWO_BODY.mu / a**3) * t
    E = M
    for _ in range(50):
        E -= (E - e * np.sin(E) - M) / (1 - e * np.cos(E))
    nu = 2 * np.arctan2(np.sqrt(1 + e) * np.sin(E / 2), np.sqrt(1 - e) * np.cos(E / 2))
    r, v = elements_to_cartesian(OrbitalElements(a, e, el.inclination, el.raan, el.arg_periapsis, nu), TWO_BODY)
    return np.r_[r, v] * 1e3


_S0 = state_from_elements(OrbitalElements.from_degrees(7500, 0.1, 30, 40, 50, 10), TWO_BODY)
X0 = np.r_[_S0.p, _S0.v]


def test_rk4_convergence_ratio_on_kepler_orbit():
    T = 3000.0
    ref = kepler_reference(X0, T)
    errs = []
    for h in (40.0, 20.0):
        tr = propagate(kepler_rhs, X0, 0.0, T, IntegratorConfig(h))
        errs.append(np.linalg.norm(tr.final[:3] - ref[:3]))
    ratio = errs[0] / errs[1]
    assert 12.0 <= ratio <= 20.0, ratio


def test_two_body_invariants_over_one_orbit():
    el = OrbitalElements.from_degrees(7500, 0.001, 30.1, 60.1, 120, 30)
    s0 = state_from_elements(el, TWO_BODY)
    T = orbital_period(7500.0)
    f = lambda t, s: target_derivative(s, BP, TWO_BODY, t)
    s1 = propagate(f, s0, 0.0, T, IntegratorConfig(1.0), stride=10 ** 6).final
    mu = TWO_BODY.mu_si

    def energy(s):
        return 0.5 * s.v @ s.v - mu / np.linalg.norm(s.p)

    def h(s):
        return np.linalg.norm(np.cross(s.p, s.v))

    assert abs(energy(s1) - energy(s0)) / abs(energy(s0)) < 1e-8
    assert abs(h(s1) - h(s0)) / h(s0) < 1e-8


@pytest.mark.parametrize("update", [EXP_MAP, MATRIX_ODE])
def test_attitude_stays_orthonormal_at_every_sample(update):
    bp = BodyParams(10.0, np.diag([1.0, 2.0, 3.0]))
    s0 = RigidBodyState(np.array([7e6, 0, 0]), np.array([0, 7.5e3, 0]), so3_exp([0.3, 0.2, 0.1]),
                        np.array([0.5, 0.02, -0.3]))
    f = lambda t, s: target_derivative(s, bp, TWO_BODY, t)
    tr = propagate(f, s0, 0.0, 200.0, IntegratorConfig(0.1, update))
    assert max(orthonormality_error(s.B) for s in tr.states) < 1e-12
    assert min(np.linalg.det(s.B) for s in tr.states) > 0


def test_exp_map_attitude_is_fourth_order():
    # torque-free axisymmetric spin has a closed form; compare the attitude error
    bp = BodyParams(1.0, np.diag([2.0, 2.0, 1.0]))
    w0 = np.array([0.3, 0.0, 1.0])
    s0 = RigidBodyState(np.zeros(3) + [1.0, 0, 0], np.zeros(3), np.eye(3), w0)
    env = EnvironmentParams(mu=1e-30, j2=0.0)
    f = lambda t, s: target_derivative(s, bp, env, t)
    T = 20.0
    # B(t) = exp(t L/I1) exp(-t Om e3) with Om = (I3 - I1) w3 / I1 the body-cone rate
    L = bp.inertia @ w0
    om = (1.0 - 2.0) * w0[2] / 2.0
    B_ref = so3_exp(T * L / 2.0) @ so3_exp(np.array([0, 0, -om * T]))
    errs = [np.linalg.norm(propagate(f, s0, 0, T, IntegratorConfig(h)).final.B - B_ref) for h in (0.2, 0.1)]
    assert 12.0 <= errs[0] / errs[1] <= 20.0


def test_partial_final_step_and_stride():
    tr = propagate(kepler_rhs, X0, 0.0, 10.5, IntegratorConfig(1.0), stride=4)
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(10.5)
    assert tr.times[1:-1] == [4.0, 8.0]


def test_zero_duration_returns_initial_state():
    tr = propagate(kepler_rhs, X0, 5.0, 5.0, IntegratorConfig(1.0))
    assert tr.times == [5.0]
    with pytest.raises(InvalidArgumentError):
        propagate(kepler_rhs, X0, 5.0, 4.0, IntegratorConfig(1.0))


def test_event_located_within_tolerance():
    # free fall x'' = -1 from x = 10 reaches 0 at sqrt(20)
    rhs = lambda t, x: np.array([x[1], -1.0])
    tr = propagate(rhs, np.array([10.0, 0.0]), 0.0, 10.0, IntegratorConfig(0.5), event_fn=lambda t, x: x[0] <= 0)
    assert abs(tr.event_time - np.sqrt(20.0)) <= 1e-3
    te, xe = locate_event(rhs, np.array([10.0, 0.0]), 0.0, 5.0, IntegratorConfig(5.0), lambda t, x: x[0] <= 0)
    assert abs(te - np.sqrt(20.0)) <= 1e-3 and xe[0] <= 0


def test_non_finite_derivative_raises():
    with pytest.raises(IntegrationError):
        rk4_step(lambda t, x: x * np.nan, np.ones(2), 0.0, IntegratorConfig(1.0))


def test_apply_impulse_is_body_frame():
    B = so3_exp([0, 0, np.pi / 2])
    s = RigidBodyState(np.zeros(3), np.zeros(3), B, np.zeros(3))
    np.testing.assert_allclose(apply_impulse(s, [1.0, 0, 0]).v, [0, 1.0, 0], atol=1e-15)
    assert apply_impulse(s, [0, 0, 0]) is s
