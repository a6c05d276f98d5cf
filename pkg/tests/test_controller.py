import numpy as np
import pytest

from cxsmc.astro import EnvironmentParams
from cxsmc.controller import CxSMC, GainSet, Reference, SaturationLimits, error_rates, tracking_errors
from cxsmc.dynamics import BodyParams, RigidBodyState, chaser_derivative, target_derivative
from cxsmc.errors import InvalidArgumentError
from cxsmc.integrator import IntegratorConfig, rk4_step
from cxsmc.lyapunov import reaching_law_residuals
from cxsmc.so3 import so3_exp

ENV = EnvironmentParams()
BP_C = BodyParams(1000.0, np.diag([500.0, 2500.0, 2500.0]))
BP_T = BodyParams(2000.0, np.diag([1000.0, 3000.0, 3500.0]))


def pair(attitude_error=(0.3, -0.1, 0.5)):
    t = RigidBodyState(np.array([7.5e6, 0, 0]), np.array([0, 7.29e3, 0]), so3_exp([0.1, 0.2, 0.3]),
                       np.array([0.001, -0.002, 0.0011]))
    c = RigidBodyState(t.p + [40.0, -25.0, 10.0], t.v + [0.05, -0.02, 0.01],
                       so3_exp([0.0, 0.1, 0.0]) @ so3_exp(attitude_error), np.array([0.01, 0.0, -0.02]))
    return c, t


def reference(t, spin=0.002):
    # desired relative position rotating slowly in inertial space, desired attitude spinning about z
    w = 1e-3
    d = 20.0 * np.array([np.cos(w * t), np.sin(w * t), 0.2])
    v = 20.0 * w * np.array([-np.sin(w * t), np.cos(w * t), 0.0])
    a = -20.0 * w * w * np.array([np.cos(w * t), np.sin(w * t), 0.0])
    wd = np.array([0.0, 0.0, spin])
    return Reference(d, v, a, so3_exp([0.0, 0.1, 0.0]) @ so3_exp(wd * t), wd, np.zeros(3))


def closed_loop(ctrl, T=20.0, h=0.01, spin=0.002, attitude_error=(0.3, -0.1, 0.5)):
    c, tg = pair(attitude_error)
    ts, sp, sr = [], [], []

    def f(tt, y):
        ev = ctrl.evaluate(tt, y[0], y[1], BP_C, BP_T, ENV, reference(tt, spin))
        return chaser_derivative(y[0], BP_C, ev.u, ENV, tt), target_derivative(y[1], BP_T, ENV, tt)

    y, t = (c, tg), 0.0
    cfg = IntegratorConfig(h)
    for i in range(int(T / h) + 1):
        ev = ctrl.evaluate(t, y[0], y[1], BP_C, BP_T, ENV, reference(t, spin))
        ts.append(t)
        sp.append(ev.surfaces.s_p)
        sr.append(ev.surfaces.s_r)
        y = rk4_step(f, y, t, cfg, h)
        t = (i + 1) * h
    return np.array(ts), np.array(sp), np.array(sr)


def test_gains_must_be_positive():
    with pytest.raises(InvalidArgumentError):
        GainSet(k_p=0.0)
    with pytest.raises(InvalidArgumentError):
        SaturationLimits(0.0, 1.0, True)
    assert GainSet().reaching_rate == 1.0 and GainSet().sliding_rate == pytest.approx(0.1)


def test_reaching_law_holds_in_closed_loop():
    # exact log-map rate: the reaching law holds for any attitude error
    g = GainSet()
    t, sp, sr = closed_loop(CxSMC(g, log_rate="exact"))
    assert reaching_law_residuals(t, sp, g.k_p)[0] >= 0.999
    assert reaching_law_residuals(t, sr, g.k_r)[0] >= 0.999
    # s decays as exp(-k t)
    ratio = np.linalg.norm(sp[-1]) / np.linalg.norm(sp[0])
    assert abs(np.log(ratio) / t[-1] + g.k_p) < 1e-3


def test_first_order_log_rate_needs_small_attitude_error():
    g = GainSet()
    t, sp, sr = closed_loop(CxSMC(g), attitude_error=(1e-3, 0.0, -1e-3))
    assert reaching_law_residuals(t, sp, g.k_p)[0] >= 0.999
    assert reaching_law_residuals(t, sr, g.k_r)[0] >= 0.999
    # with a 0.6 rad error the neglected lambda_r (Jr^-1(e_r) - I) e_w term shows up in s_r only
    t, sp, sr = closed_loop(CxSMC(g), T=10.0)
    assert reaching_law_residuals(t, sp, g.k_p)[0] >= 0.999
    assert reaching_law_residuals(t, sr, g.k_r)[0] < 0.999


def test_verbatim_cross_term_breaks_reaching_law_for_spinning_reference():
    g = GainSet()
    t, _, sr = closed_loop(CxSMC(g, log_rate="exact"), T=5.0, spin=0.05)
    assert reaching_law_residuals(t, sr, g.k_r)[0] >= 0.999
    t, _, sr = closed_loop(CxSMC(g, log_rate="exact", cross_term="omega_d_dot"), T=5.0, spin=0.05)
    assert reaching_law_residuals(t, sr, g.k_r)[0] < 0.999


def test_attitude_only_mode_applies_no_force():
    c, tg = pair()
    ev = CxSMC().evaluate(0.0, c, tg, BP_C, BP_T, ENV, reference(0.0), translation=False)
    np.testing.assert_array_equal(ev.u.force, np.zeros(3))
    np.testing.assert_array_equal(ev.rel.e_p, np.zeros(3))
    assert np.linalg.norm(ev.u.torque) > 0


def test_saturation_clips_each_axis():
    c, tg = pair()
    lim = SaturationLimits(0.5, 1e-3, True)
    ev = CxSMC(limits=lim).evaluate(0.0, c, tg, BP_C, BP_T, ENV, reference(0.0))
    assert np.max(np.abs(ev.u.force)) <= 0.5 and np.max(np.abs(ev.u.torque)) <= 1e-3


def test_error_rates_definitions():
    c, tg = pair()
    ref = reference(0.0)
    rel = tracking_errors(c, tg, ref)
    ep_dot, er_dot = error_rates(rel, c)
    np.testing.assert_allclose(ep_dot, rel.e_v - np.cross(c.omega, rel.e_p))
    np.testing.assert_array_equal(er_dot, rel.e_omega)
    with pytest.raises(InvalidArgumentError):
        error_rates(rel, c, "second_order")


def test_tracking_errors_vanish_on_reference():
    _, tg = pair()
    ref = reference(0.0)
    c = RigidBodyState(tg.p + ref.d, tg.v + ref.w, ref.B_d, ref.omega_d.copy())
    rel = tracking_errors(c, tg, ref)
    for x in (rel.e_p, rel.e_v, rel.e_r, rel.e_omega):
        np.testing.assert_allclose(x, 0.0, atol=1e-9)
