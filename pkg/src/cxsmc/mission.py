"""Phase-structured rendezvous and docking executive.

Phase 1 executes an optimized impulse plan while the CxSMC holds the chaser
attitude (attitude-only control); it ends when the separation falls below the
rendezvous range. Phases 2 and 3 run the full CxSMC closed loop along the
approach corridor (target docking axis) at ``v_mid`` and then ``v_final``; the
mission is docked when the separation reaches the port offset.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from . import astro
from .controller import CxSMC, GainSet, Reference, SaturationLimits
from .dynamics import BodyParams, RigidBodyState, chaser_derivative, cross, state_from_elements, target_derivative
from .errors import InvalidArgumentError, MissionFailure
from .guidance import (
    ConstraintSet, GoalWindow, ImpulsePlan, OptimizerSettings, check_cone, check_fov, check_keep_out, optimize_plan,
)
from .integrator import IntegratorConfig, locate_event, propagate, rk4_step
from .lyapunov import audit_trajectory, v1_series, v2_series
from .missionlog import MissionLog, MissionPhase
from .so3 import from_euler, so3_exp, so3_log, to_euler

log = logging.getLogger(__name__)

DAY = 86400.0


@dataclass(frozen=True)
class ScenarioConfig:
    chaser_elements: astro.OrbitalElements = astro.OrbitalElements.from_degrees(7500.0, 0.001, 30.1, 60.1, 120.0, 30.0)
    target_elements: astro.OrbitalElements = astro.OrbitalElements.from_degrees(8000.0, 0.0005, 30.0, 60.0, 120.0, 310.0)
    chaser_params: BodyParams = BodyParams(1000.0, np.diag([500.0, 2500.0, 2500.0]))
    target_params: BodyParams = BodyParams(1000.0, np.diag([500.0, 2500.0, 2500.0]))
    gains: GainSet = GainSet()
    limits: SaturationLimits = SaturationLimits()
    log_rate: str = "first_order"
    cross_term: str = "omega_d"
    constraints: ConstraintSet = ConstraintSet()
    env: astro.EnvironmentParams = astro.EnvironmentParams()
    long_range_step: float = 1.0  # s
    proximity_step: float = 0.05  # s
    attitude_update: str = "exp_map"
    optimizer: OptimizerSettings = OptimizerSettings()
    goal_position_tolerance: float = 1.0  # m per axis at arrival
    goal_velocity_tolerance: float = 1e-3  # m/s per axis at arrival
    transfer_time: float = 105780.0  # s, arrival of the long-range plan
    aim_range: float = 1010.0  # m on the docking axis at arrival
    port_offset: float = 1.0  # m
    rendezvous_range: float = 1000.0  # m
    terminal_range: float = 10.0  # m
    terminal_orientation: tuple = (0.0, 0.0, -np.pi)  # rad, Z-Y-X (phi, theta, psi) of B_t^T B_c at dock
    reorientation_duration: float = 600.0  # s
    reorientation_lead: float = 1200.0  # s before arrival at which the flip starts
    speed_blend_duration: float = 20.0  # s
    dock_velocity_factor: float = 2.0
    dock_attitude_tol: float = 0.01  # rad
    phase_timeouts: tuple = (6 * 3600.0, 2 * 3600.0, 1800.0)  # s beyond nominal / per phase
    log_strides: tuple = (60.0, 1.0, 1.0, 1.0)  # s, CSV decimation per phase
    seed: int = 0

    def __post_init__(self):
        if not self.rendezvous_range > self.terminal_range > self.port_offset > 0:
            raise InvalidArgumentError("phase thresholds must be strictly decreasing and positive")
        if not 0 < self.reorientation_duration <= self.reorientation_lead < self.transfer_time:
            raise InvalidArgumentError("reorientation must finish before arrival")
        if not self.aim_range > self.rendezvous_range:
            raise InvalidArgumentError("aim_range must exceed rendezvous_range")
        for name in ("long_range_step", "proximity_step", "speed_blend_duration"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")

    @property
    def flip_vector(self) -> np.ndarray:
        """Rotation vector of the port flip.

        At a half-turn ``phi`` and ``-phi`` give the same rotation; pick the one whose
        unwrapped Euler reading along ``exp(s phi)`` ends at ``terminal_orientation``.
        """
        target = np.asarray(self.terminal_orientation, float)
        phi = so3_log(from_euler(target))
        if np.linalg.norm(phi) < np.pi - 1e-6:
            return phi
        return min((phi, -phi), key=lambda v: np.linalg.norm(_unwrapped_euler_end(v) - target))

    def canonical_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self), default=_canon, sort_keys=True))

    def config_hash(self) -> str:
        text = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _unwrapped_euler_end(phi, n=64):
    """Euler reading of ``exp(phi)`` unwrapped along ``exp(s phi)``, ``s`` from 0 to 1."""
    prev = to_euler(_EYE3)
    for s in np.linspace(0.0, 1.0, n)[1:]:
        e = to_euler(so3_exp(s * phi))
        prev = prev + (e - prev + np.pi) % (2 * np.pi) - np.pi
    return prev


def _canon(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


# -- initial conditions ----------------------------------------------------------


def target_initial_attitude(p, v) -> np.ndarray:
    """Body x on the orbit normal, body y against the velocity.

    With an inertia axisymmetric about x, the gravity-gradient torque vanishes while
    the position stays in the body y-z plane, so the target is nearly inertially fixed.
    """
    x = np.cross(p, v)
    x /= np.linalg.norm(x)
    y = -(v - x * (x @ v))
    y /= np.linalg.norm(y)
    return np.column_stack([x, y, np.cross(x, y)])


def initial_states(cfg: ScenarioConfig):
    tg = state_from_elements(cfg.target_elements, cfg.env)
    Bt = target_initial_attitude(tg.p, tg.v)
    tg = tg.replace(B=Bt)
    ch = state_from_elements(cfg.chaser_elements, cfg.env, B=Bt.copy())
    return ch, tg


# -- references ---------------------------------------------------------------------


_EYE3 = np.eye(3)
_ZERO3 = np.zeros(3)


def quintic(tau):
    """Rest-to-rest time scaling on ``[0, 1]``: value, first and second derivative."""
    tau = float(np.clip(tau, 0.0, 1.0))
    s = tau**3 * (10 - 15 * tau + 6 * tau**2)
    sd = 30 * tau**2 * (1 - tau) ** 2
    sdd = 60 * tau * (1 - tau) * (1 - 2 * tau)
    return s, sd, sdd


@dataclass(frozen=True)
class AttitudeSchedule:
    """Desired chaser attitude ``B_d = B_t exp(s(t) phi)`` with a quintic ``s``."""

    phi: np.ndarray
    t_start: float
    duration: float

    @cached_property
    def _end(self):
        return so3_exp(np.asarray(self.phi, float))

    def relative(self, t):
        tau = (t - self.t_start) / self.duration
        if tau <= 0.0:
            return _EYE3, _ZERO3, _ZERO3
        if tau >= 1.0:
            return self._end, _ZERO3, _ZERO3
        s, sd, sdd = quintic(tau)
        return so3_exp(s * self.phi), sd / self.duration * self.phi, sdd / self.duration**2 * self.phi

    def desired(self, t, target: RigidBodyState, target_omega_dot):
        R, rate, acc = self.relative(t)
        wt = R.T @ target.omega
        omega_d = wt + rate
        omega_d_dot = -cross(rate, wt) + R.T @ target_omega_dot + acc
        return target.B @ R, omega_d, omega_d_dot


@dataclass(frozen=True)
class CorridorProfile:
    """Range along the docking axis versus time: ``v_mid`` to ``r_inner``, then a
    smoothstep speed blend to ``v_final`` over ``blend`` seconds, then ``v_final``."""

    t0: float
    r0: float
    v_mid: float
    v_final: float
    r_inner: float
    blend: float

    @property
    def t_inner(self):
        return self.t0 + max(self.r0 - self.r_inner, 0.0) / self.v_mid

    def range_rate(self, t):
        """``(r, r_dot, r_ddot)`` at ``t``."""
        ti = self.t_inner
        if t <= ti:
            return self.r0 - self.v_mid * (t - self.t0), -self.v_mid, 0.0
        r_i = self.r0 - self.v_mid * (ti - self.t0)
        dv = self.v_final - self.v_mid
        T = self.blend
        if t <= ti + T:
            x = (t - ti) / T
            r = r_i - T * (self.v_mid * x + dv * (x**3 - 0.5 * x**4))
            speed = self.v_mid + dv * (3 * x**2 - 2 * x**3)
            accel = dv * (6 * x - 6 * x**2) / T
            return r, -speed, -accel
        r_b = r_i - T * (self.v_mid + 0.5 * dv)
        return r_b - self.v_final * (t - ti - T), -self.v_final, 0.0


def translational_reference(t, profile: CorridorProfile, target: RigidBodyState, target_omega_dot, axis_t):
    """Desired ``d, w, a`` (inertial) for a point at range ``r(t)`` on the target docking axis."""
    r, rd, rdd = profile.range_rate(t)
    B, w, wd = target.B, target.omega, target_omega_dot
    q = r * axis_t
    qd = rd * axis_t
    qdd = rdd * axis_t
    d = B @ q
    vel = B @ (cross(w, q) + qd)
    acc = B @ (cross(wd, q) + cross(w, cross(w, q)) + 2 * cross(w, qd) + qdd)
    return d, vel, acc


def reference_generator(phase, rel_range: float, c: ConstraintSet, port_offset: float = 1.0):
    """Desired approach speed toward the port for a given phase and separation [m/s]."""
    if phase == MissionPhase.Docked or rel_range <= port_offset:
        return 0.0
    if phase == MissionPhase.LongRangeRendezvous:
        return float("nan")
    return c.v_mid if rel_range > c.mid_range_inner else c.v_final


# -- mission ----------------------------------------------------------------------


@dataclass
class MissionResult:
    log: MissionLog
    summary: dict
    plan: ImpulsePlan


def _same_state(a: RigidBodyState, b: RigidBodyState) -> bool:
    return (a is b) or (np.array_equal(a.p, b.p) and np.array_equal(a.v, b.v)
                        and np.array_equal(a.omega, b.omega) and np.array_equal(a.B, b.B))


class _Loop:
    """Coupled chaser/target/Delta-v-accumulator propagation with logging."""

    def __init__(self, cfg: ScenarioConfig, ctrl: CxSMC, attitude: AttitudeSchedule):
        self.cfg = cfg
        self.ctrl = ctrl
        self.attitude = attitude
        self.bp_c, self.bp_t = cfg.chaser_params, cfg.target_params
        self.env = cfg.env
        self.axis_t = cfg.constraints.axis_t
        self.phase = MissionPhase.LongRangeRendezvous
        self.corridor: Optional[CorridorProfile] = None
        self.rows = {}
        self._euler_prev = None
        self._cache = None

    def evaluate(self, t, chaser, target):
        d_t = target_derivative(target, self.bp_t, self.env, t)
        B_d, w_d, wd_d = self.attitude.desired(t, target, d_t.omega_dot)
        translation = self.phase != MissionPhase.LongRangeRendezvous
        if translation:
            d, w, a = translational_reference(t, self.corridor, target, d_t.omega_dot, self.axis_t)
        else:
            d = w = a = np.zeros(3)
        ref = Reference(d, w, a, B_d, w_d, wd_d)
        ev = self.ctrl.evaluate(t, chaser, target, self.bp_c, self.bp_t, self.env, ref, translation)
        return ev, d_t, ref

    def derivative(self, t, y):
        chaser, target, _ = y
        if self._cache is not None and self._cache[0] == t and _same_state(self._cache[1], chaser):
            ev, d_t = self._cache[2], self._cache[3]
        else:
            ev, d_t, _ = self.evaluate(t, chaser, target)
        d_c = chaser_derivative(chaser, self.bp_c, ev.u, self.env, t)
        return d_c, d_t, np.array([np.linalg.norm(ev.u.force) / self.bp_c.mass])

    def record(self, t, y, closed_loop):
        chaser, target, acc = y
        ev, d_t, ref = self.evaluate(t, chaser, target)
        self._cache = (t, chaser, ev, d_t)
        R_rel = target.B.T @ chaser.B
        eul = to_euler(R_rel)
        if self._euler_prev is not None:
            eul = self._euler_prev + (eul - self._euler_prev + np.pi) % (2 * np.pi) - np.pi
        self._euler_prev = eul
        d = chaser.p - target.p
        rng = np.linalg.norm(d)
        c = self.cfg.constraints
        s = ev.surfaces
        row = {
            "t": t, "phase": int(self.phase),
            "chaser_p": chaser.p, "chaser_v": chaser.v, "chaser_B": chaser.B, "chaser_omega": chaser.omega,
            "target_p": target.p, "target_v": target.v, "target_B": target.B, "target_omega": target.omega,
            "d": d, "w": chaser.v - target.v,
            "e_p": ev.rel.e_p, "e_v": ev.rel.e_v, "e_r": ev.rel.e_r, "e_omega": ev.rel.e_omega,
            "s_p": s.s_p, "s_r": s.s_r, "force": ev.u.force, "torque": ev.u.torque,
            "v1": 0.0, "v2": 0.0, "dv_cum": float(acc[0]),
            "euler": eul, "rel_omega": chaser.omega - chaser.B.T @ target.B @ target.omega,
            "keep_out_margin": check_keep_out(d, c),
            "cone_margin": check_cone(target.B.T @ d, c) if rng > 0 else 0.0,
            "fov_margin": check_fov(-d, chaser.B, c) if rng > 0 else 0.0,
            "closed_loop": bool(closed_loop),
        }
        for k, v in row.items():
            self.rows.setdefault(k, []).append(v)

    def advance(self, t, y, t_stop, h, event_fn, closed_loop):
        """March to ``t_stop``; returns ``(t, y, hit)`` with ``hit`` True at an event."""
        cfg = IntegratorConfig(h, self.cfg.attitude_update)
        n = int(np.floor((t_stop - t) / h + 1e-9))
        t_start = t
        for i in range(n + 1):
            step = h if i < n else (t_stop - t_start) - n * h
            if step <= 1e-9:
                break
            y_new = rk4_step(self.derivative, y, t, cfg, h=step)
            t_new = t_start + (i + 1) * h if i < n else t_stop
            if event_fn is not None and event_fn(t_new, y_new):
                te, ye = locate_event(self.derivative, y, t, step, cfg, event_fn)
                self.record(te, ye, closed_loop)
                return te, ye, True
            t, y = t_new, y_new
            self.record(t, y, closed_loop)
        return t, y, False


def _range_below(r):
    return lambda t, y: np.linalg.norm(y[0].p - y[1].p) <= r


def plan_long_range(cfg: ScenarioConfig, chaser0=None, target0=None) -> ImpulsePlan:
    """Optimize the Phase-1 impulse plan: arrive at ``aim_range`` on the docking axis at ``v_mid``."""
    if chaser0 is None:
        chaser0, target0 = initial_states(cfg)
    T = cfg.transfer_time
    predict = _TargetPredictor(cfg, target0)
    tgt = predict(T)
    axis = cfg.constraints.axis_t
    q = cfg.aim_range * axis
    goal = GoalWindow(
        T, tuple(tgt.B @ q), tuple(tgt.B @ (cross(tgt.omega, q) - cfg.constraints.v_mid * axis)),
        cfg.goal_position_tolerance, cfg.goal_velocity_tolerance,
    )
    att = _attitude_schedule(cfg)

    def profile(t):
        return predict(t).B @ att.relative(t)[0]

    settings = replace(cfg.optimizer, seed=cfg.seed, chaser_mass=cfg.chaser_params.mass)
    return optimize_plan(chaser0, target0, goal, settings.n_impulses, cfg.constraints, cfg.env, settings, profile)


class _TargetPredictor:
    """Uncontrolled target state at a requested time, used to predict attitudes for planning.

    Uses the long-range step so the prediction reproduces the Phase-1 target
    propagation: the tumbling target's attitude is sensitive to the step, and
    body-frame impulses inherit any attitude mismatch.
    """

    def __init__(self, cfg, target0):
        self.cfg = cfg
        self.states = {0.0: target0}

    def __call__(self, t):
        t = round(float(t), 6)
        if t in self.states:
            return self.states[t]
        t0 = max(k for k in self.states if k <= t)
        cfg = self.cfg
        f = lambda tt, s: target_derivative(s, cfg.target_params, cfg.env, tt)
        tr = propagate(f, self.states[t0], t0, t, IntegratorConfig(cfg.long_range_step, cfg.attitude_update))
        self.states[t] = tr.final
        return tr.final


def _attitude_schedule(cfg: ScenarioConfig) -> AttitudeSchedule:
    return AttitudeSchedule(cfg.flip_vector, cfg.transfer_time - cfg.reorientation_lead, cfg.reorientation_duration)


def run_mission(cfg: ScenarioConfig, plan: Optional[ImpulsePlan] = None, chaser0=None, target0=None) -> MissionResult:
    """Run all phases; raises :class:`MissionFailure` (with the partial log) on a phase timeout."""
    if chaser0 is None:
        chaser0, target0 = initial_states(cfg)
    r0 = np.linalg.norm(chaser0.p - target0.p)
    if plan is None and r0 > cfg.rendezvous_range:
        plan = plan_long_range(cfg, chaser0, target0)
    ctrl = CxSMC(cfg.gains, cfg.limits, cfg.log_rate, cfg.cross_term)
    loop = _Loop(cfg, ctrl, _attitude_schedule(cfg))
    c = cfg.constraints
    y = (chaser0, target0, np.zeros(1))
    t = 0.0
    loop.record(t, y, False)
    transitions = {}
    impulse_dv = 0.0

    def fail(msg):
        mlog = _finish_log(loop, cfg)
        raise MissionFailure(msg, mlog, _summary(cfg, mlog, plan, transitions, impulse_dv, None))

    if r0 <= cfg.port_offset:
        transitions["Docked"] = t
        loop.phase = MissionPhase.Docked
    elif r0 <= cfg.rendezvous_range:
        pass
    else:
        # Phase 1: impulses at plan times, attitude-only control between them.
        h = cfg.long_range_step
        for ti, dv in zip(plan.times, plan.impulses):
            if ti > t:
                t, y, _ = loop.advance(t, y, ti, h, None, False)
            ch = y[0]
            if np.any(dv):
                y = (ch.replace(v=ch.v + ch.B @ dv), y[1], y[2])
                impulse_dv += float(np.linalg.norm(dv))
                loop.rows["t"][-1] = np.nextafter(t, -np.inf) if len(loop.rows["t"]) > 1 else t
                loop.record(t, y, False)
        t_limit = max(t, cfg.transfer_time) + cfg.phase_timeouts[0]
        t, y, hit = loop.advance(t, y, t_limit, h, _range_below(cfg.rendezvous_range), False)
        if not hit:
            fail("long-range phase timed out before reaching the rendezvous range")
    if loop.phase == MissionPhase.LongRangeRendezvous:
        transitions["LongRangeRendezvous_end"] = t
    h = cfg.proximity_step
    if loop.phase < MissionPhase.Docked:
        r_entry = float(np.linalg.norm(y[0].p - y[1].p))
        loop.corridor = CorridorProfile(t, r_entry, c.v_mid, c.v_final, cfg.terminal_range, cfg.speed_blend_duration)
        if r_entry > cfg.terminal_range:
            loop.phase = MissionPhase.MidRangeApproach
            transitions["MidRangeApproach"] = t
            _replace_last(loop, t, y)
            nominal = (r_entry - cfg.terminal_range) / c.v_mid
            t, y, hit = loop.advance(t, y, t + nominal + cfg.phase_timeouts[1], h,
                                     _range_below(cfg.terminal_range), True)
            if not hit:
                fail("mid-range approach timed out")
        loop.phase = MissionPhase.TerminalDocking
        transitions["TerminalDocking"] = t
        _replace_last(loop, t, y)
        r_now = float(np.linalg.norm(y[0].p - y[1].p))
        nominal = cfg.speed_blend_duration + r_now / c.v_final
        t, y, hit = loop.advance(t, y, t + nominal + cfg.phase_timeouts[2], h, _range_below(cfg.port_offset), True)
        if not hit:
            fail("terminal docking timed out")
        loop.phase = MissionPhase.Docked
        transitions["Docked"] = t
        _replace_last(loop, t, y)

    mlog = _finish_log(loop, cfg)
    att = _attitude_schedule(cfg)
    B_d = y[1].B @ att.relative(t)[0]
    port_error = float(np.linalg.norm(so3_log(B_d.T @ y[0].B)))
    rel_speed = float(np.linalg.norm(y[0].v - y[1].v))
    docked_ok = port_error <= cfg.dock_attitude_tol and rel_speed <= cfg.dock_velocity_factor * c.v_final
    summary = _summary(cfg, mlog, plan, transitions, impulse_dv, {
        "port_attitude_error": port_error, "relative_speed": rel_speed, "soft_dock": bool(docked_ok),
    })
    if not docked_ok:
        raise MissionFailure("docking conditions not met at the port offset", mlog, summary)
    return MissionResult(mlog, summary, plan)


def _replace_last(loop: _Loop, t, y):
    """Re-record the last sample under the new phase (same time, new reference)."""
    for v in loop.rows.values():
        v.pop()
    loop._euler_prev = loop.rows["euler"][-1] if loop.rows["euler"] else None
    loop.record(t, y, loop.phase != MissionPhase.LongRangeRendezvous)


def _finish_log(loop: _Loop, cfg: ScenarioConfig) -> MissionLog:
    rows = loop.rows
    # impulse instants are stored as a pre/post pair; nudge the pre sample back
    t = np.asarray(rows["t"], float)
    for i in range(1, len(t)):
        if t[i] <= t[i - 1]:
            t[i - 1] = np.nextafter(t[i], -np.inf)
    rows["t"] = list(t)
    mlog = MissionLog.from_rows(rows)
    mlog.arrays["v1"] = v1_series(mlog.s_p, mlog.s_r, cfg.chaser_params)
    mlog.arrays["v2"] = v2_series(mlog.e_p, mlog.e_r)
    return mlog


def _summary(cfg, mlog: MissionLog, plan, transitions, impulse_dv, dock) -> dict:
    integ = float(mlog.dv_cum[-1]) if len(mlog) else 0.0
    out = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "phase_times": transitions,
        "impulse_dv": impulse_dv,
        "control_dv": integ,
        "total_dv": impulse_dv + integ,
        "plan_total_dv": plan.total_dv if plan is not None else 0.0,
        "n_samples": len(mlog),
    }
    if len(mlog):
        out["final"] = {
            "t": float(mlog.t[-1]),
            "separation": float(np.linalg.norm(mlog.d[-1])),
            "relative_velocity": mlog.w[-1].tolist(),
            "e_p": mlog.e_p[-1].tolist(),
            "e_r": mlog.e_r[-1].tolist(),
            "euler": mlog.euler[-1].tolist(),
            "euler_convention": "Z-Y-X (roll, pitch, yaw) of B_t^T B_c, unwrapped",
            "relative_rotation": (mlog.target_B[-1].T @ mlog.chaser_B[-1]).tolist(),
        }
        out["assumptions"] = {
            "desired_frame": "target body frame composed with the scheduled port rotation",
            "target_attitude": "uncontrolled",
        }
        prox = mlog.closed_loop
        if prox.sum() >= 2:
            sub = mlog.select(prox)
            out["audit"] = audit_trajectory(sub, cfg.gains, cfg.chaser_params).to_dict()
            out["constraints"] = {
                "min_cone_margin": float(sub.cone_margin.min()),
                "min_fov_margin": float(sub.fov_margin.min()),
            }
        lr = mlog.phase == MissionPhase.LongRangeRendezvous
        if lr.any():
            out["constraints_long_range"] = {"min_keep_out_margin": float(mlog.keep_out_margin[lr].min())}
    if dock is not None:
        out["docking"] = dock
    return out
