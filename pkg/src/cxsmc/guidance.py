"""Long-range impulsive guidance: trajectory constraints, plan propagation, optimization.

The optimizer minimizes ``J = (sum_i ||dv_i||)^2`` over impulses applied at a fixed
time grid, subject to a terminal relative-state window, the impulse bound and the
keep-out sphere. It uses successive convexification: the terminal state is
linearized by batched finite differences and each subproblem is a second-order
cone program with a trust region. Candidate trajectories are integrated together
with a tight-tolerance DOP853 scheme (agrees with the 1 s mission RK4 to ~1e-4 m
over a day).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import cvxpy as cp
import numpy as np
from scipy.integrate import solve_ivp

from . import astro
from .dynamics import BodyParams, RigidBodyState, cross
from .errors import DomainError, InfeasiblePlanError, InvalidArgumentError, UndefinedDirectionError
from .integrator import IntegratorConfig, propagate

log = logging.getLogger(__name__)

EPS_FEAS = 1e-3
UNCONSTRAINED = float("inf")


@dataclass(frozen=True)
class ConstraintSet:
    r_min: float = 200.0  # m
    alpha_cone: float = np.radians(15.0)
    alpha_fov: float = np.radians(20.0)
    docking_axis_target: tuple = (0.0, 1.0, 0.0)
    docking_axis_chaser: tuple = (0.0, 1.0, 0.0)
    v_mid: float = 0.3  # m/s
    v_final: float = 0.03  # m/s
    mid_range_outer: float = 1000.0  # m
    mid_range_inner: float = 10.0  # m
    dv_bound: float = 300.0 * np.sqrt(3.0)  # m/s
    per_axis_bound: bool = False
    tol_v_fraction: float = 0.05

    def __post_init__(self):
        if not self.r_min > 0:
            raise InvalidArgumentError("r_min must be positive")
        for name in ("alpha_cone", "alpha_fov"):
            a = getattr(self, name)
            if not 0 < a < np.pi / 2:
                raise InvalidArgumentError(f"{name} must lie in (0, pi/2)")
        for name in ("docking_axis_target", "docking_axis_chaser"):
            ax = np.asarray(getattr(self, name), float)
            if ax.shape != (3,) or abs(np.linalg.norm(ax) - 1.0) > 1e-9:
                raise InvalidArgumentError(f"{name} must be a unit 3-vector")
            object.__setattr__(self, name, tuple(ax))
        if not self.v_final < self.v_mid:
            raise InvalidArgumentError("v_final must be below v_mid")
        if not self.mid_range_inner < self.mid_range_outer:
            raise InvalidArgumentError("mid_range_inner must be below mid_range_outer")
        if not self.dv_bound > 0:
            raise InvalidArgumentError("dv_bound must be positive")

    @property
    def axis_t(self) -> np.ndarray:
        return np.array(self.docking_axis_target)

    @property
    def axis_c(self) -> np.ndarray:
        return np.array(self.docking_axis_chaser)


# -- constraint margins (positive = satisfied) --------------------------------


def check_keep_out(e_p, c: ConstraintSet) -> float:
    return float(np.linalg.norm(e_p) - c.r_min)


def _cone_margin(vec, axis, alpha) -> float:
    vec = np.asarray(vec, float)
    n = np.linalg.norm(vec)
    if n == 0.0:
        raise UndefinedDirectionError("cone margin undefined for a zero vector")
    return float(axis @ vec - n * np.cos(alpha))


def check_cone(e_p, c: ConstraintSet) -> float:
    """Approach-corridor margin; ``e_p`` must be resolved in the target body frame."""
    return _cone_margin(e_p, c.axis_t, c.alpha_cone)


def check_fov(e_fov, chaser_attitude, c: ConstraintSet) -> float:
    """Field-of-view margin for the target position relative to the chaser.

    ``e_fov`` is inertial; it is resolved in the chaser body frame using
    ``chaser_attitude`` (body->inertial). Pass the identity for a body-frame vector.
    """
    v_body = np.asarray(chaser_attitude, float).T @ np.asarray(e_fov, float)
    return _cone_margin(v_body, c.axis_c, c.alpha_fov)


def check_velocity_profile(e_p, e_v, c: ConstraintSet, tol_v: Optional[float] = None) -> float:
    r = float(np.linalg.norm(e_p))
    speed = float(np.linalg.norm(e_v))
    if r > c.mid_range_outer:
        return UNCONSTRAINED
    v_ref = c.v_mid if r > c.mid_range_inner else c.v_final
    tol = c.tol_v_fraction * v_ref if tol_v is None else tol_v
    return tol - abs(speed - v_ref)


def check_impulse_bound(dv, c: ConstraintSet) -> float:
    dv = np.asarray(dv, float)
    if c.per_axis_bound:
        return float(c.dv_bound / np.sqrt(3.0) - np.max(np.abs(dv)))
    return float(c.dv_bound - np.linalg.norm(dv))


# -- plans and reports ------------------------------------------------------


@dataclass
class ImpulsePlan:
    """Timed body-frame impulses. ``objective`` is ``(sum ||dv_i||)^2`` in (m/s)^2."""

    times: list
    impulses: list
    objective: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = [float(t) for t in self.times]
        self.impulses = [np.asarray(dv, float).reshape(3) for dv in self.impulses]
        if len(self.times) != len(self.impulses):
            raise InvalidArgumentError("times and impulses differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InvalidArgumentError("impulse times must be strictly increasing")
        if not all(np.all(np.isfinite(dv)) for dv in self.impulses):
            raise InvalidArgumentError("impulses must be finite")
        self.objective = objective_magnitudes(self.impulses)

    @property
    def total_dv(self) -> float:
        return float(sum(np.linalg.norm(dv) for dv in self.impulses))

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "impulses": [dv.tolist() for dv in self.impulses],
            "frame": "chaser_body",
            "objective": self.objective,
            # vector sums only make sense in one frame
            "objective_vector_sum": objective_vector_sum(self.metadata.get("impulses_inertial", self.impulses)),
            "total_dv": self.total_dv,
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "ImpulsePlan":
        return cls(d["times"], d["impulses"], metadata=d.get("metadata", {}))

    @classmethod
    def from_json(cls, path) -> "ImpulsePlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _jsonable(x):
    return json.loads(json.dumps(x, default=_json_default, allow_nan=True))


def objective_magnitudes(impulses) -> float:
    return float(sum(np.linalg.norm(dv) for dv in impulses)) ** 2


def objective_vector_sum(impulses) -> float:
    if len(impulses) == 0:
        return 0.0
    return float(np.linalg.norm(np.sum(impulses, axis=0))) ** 2


@dataclass
class ConstraintReport:
    """Worst signed margin per constraint and when it occurred."""

    margins: dict = field(default_factory=dict)  # name -> (worst margin, time)

    def update(self, name, margin, t):
        if not np.isfinite(margin):
            return
        cur = self.margins.get(name)
        if cur is None or margin < cur[0]:
            self.margins[name] = (float(margin), float(t))

    def satisfied(self, name, eps=0.0) -> bool:
        m = self.margins.get(name)
        return m is None or m[0] >= -eps

    @property
    def feasible(self) -> bool:
        return all(m[0] >= -EPS_FEAS for m in self.margins.values())

    def to_dict(self) -> dict:
        return {k: {"worst_margin": m, "time": t, "satisfied": m >= -EPS_FEAS} for k, (m, t) in self.margins.items()}


@dataclass(frozen=True)
class GoalWindow:
    """Terminal window at ``time`` for the chaser-minus-target state (inertial).

    Satisfied when every position component is within ``pos_tol`` [m] and every
    velocity component within ``vel_tol`` [m/s].
    """

    time: float
    d: tuple
    w: tuple
    pos_tol: float = 1.0
    vel_tol: float = 1e-3

    def errors(self, d, w):
        return np.asarray(d, float) - np.array(self.d), np.asarray(w, float) - np.array(self.w)

    def contains(self, d, w) -> bool:
        ed, ew = self.errors(d, w)
        return bool(np.all(np.abs(ed) <= self.pos_tol * (1 + 1e-9)) and np.all(np.abs(ew) <= self.vel_tol * (1 + 1e-9)))


@dataclass(frozen=True)
class OptimizerSettings:
    n_impulses: int = 12
    times: Optional[tuple] = None  # explicit grid (s from t0); otherwise evenly spaced to goal time
    grid_quantum: float = 10.0  # s; grid times are rounded to this
    initial_guess: str = "phasing"  # "phasing" or "zero"
    rtol: float = 1e-12
    atol: float = 1e-6  # m, m/s
    sample_step: float = 60.0  # s, keep-out sampling
    seed: int = 0
    init_jitter: float = 0.0  # m/s, seeded perturbation of the zero initial guess
    max_iter: int = 60  # per window fraction
    max_restore_iter: int = 40
    window_fractions: tuple = (0.5, 0.99)  # shrunken windows used while iterating
    trust_radius: float = 10.0  # m/s
    fd_step: float = 1e-2  # m/s
    stall_tol: float = 1e-4  # stop when the last 5 accepted steps average less than this relative gain
    max_thrust: float = 500.0  # N, for burn-duration metadata only
    chaser_mass: float = 1000.0


# -- batched translational propagation ---------------------------------------


def _two_body_rhs(X, mu, j2, re):
    A = astro.gravity_j2_accel(X[:, :3], mu, j2, re)
    return np.concatenate([X[:, 3:], A], axis=1)


def _segment_steps(t0, t1, h):
    n = int(np.floor((t1 - t0) / h + 1e-9))
    steps = [h] * n
    rem = (t1 - t0) - n * h
    if rem > 1e-9:
        steps.append(rem)
    return steps


def batch_propagate(chaser_x0, target_x0, times, dvs, t_end, env, rtol=1e-12, atol=1e-6, sample_step=60.0):
    """Propagate N chaser candidates (inertial ``[p, v]``, SI) plus the target.

    ``dvs`` has shape ``(N, n, 3)`` (inertial impulses applied at ``times``). All
    candidates share one adaptive DOP853 integration per inter-impulse segment.
    Returns ``(chaser_final (N,6), target_final (6,), min_range (N,))`` where
    ``min_range`` is the closest approach sampled every ``sample_step`` seconds.
    """
    dvs = np.asarray(dvs, float)
    N = dvs.shape[0]
    X = np.vstack([np.tile(chaser_x0, (N, 1)), target_x0[None, :]])
    mu, j2, re = env.mu_si, env.j2, env.earth_radius_si

    def rhs(t, y):
        return _two_body_rhs(y.reshape(-1, 6), mu, j2, re).ravel()

    min_range = np.linalg.norm(X[:N, :3] - X[N, :3], axis=1)
    bounds = [0.0] + list(times) + [t_end]
    for k in range(len(bounds) - 1):
        if k >= 1:
            X[:N, 3:] += dvs[:, k - 1, :]
        t0, t1 = bounds[k], bounds[k + 1]
        if t1 - t0 <= 1e-9:
            continue
        t_eval = np.append(np.arange(t0, t1, sample_step)[1:], t1)
        sol = solve_ivp(rhs, (t0, t1), X.ravel(), method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)
        if not sol.success:
            raise InvalidArgumentError(f"plan propagation failed: {sol.message}")
        Y = sol.y.reshape(N + 1, 6, -1)
        min_range = np.minimum(min_range, np.linalg.norm(Y[:N, :3, :] - Y[N, None, :3, :], axis=1).min(axis=1))
        X = Y[:, :, -1].copy()
    return X[:N], X[N], min_range


# -- plan propagation with full states ----------------------------------------


def _hold_attitude(B0):
    B0 = np.asarray(B0, float)
    return lambda t: B0


def propagate_plan(
    chaser0: RigidBodyState, target0: RigidBodyState, plan: ImpulsePlan, env, cfg: IntegratorConfig,
    bp_t: BodyParams, c: Optional[ConstraintSet] = None, t_end: Optional[float] = None,
    attitude_profile: Optional[Callable] = None, stride: int = 1, chaser_mass: float = 1000.0,
):
    """Propagate target (full rigid body) and chaser translation through ``plan``.

    The chaser attitude is prescribed by ``attitude_profile(t)`` (default: held at
    its initial value); body-frame impulses are rotated with it. Constraints are
    evaluated at every sample. Returns ``(times, chaser_states, target_states, report)``.
    """
    from .dynamics import target_derivative

    c = c or ConstraintSet()
    profile = attitude_profile or _hold_attitude(chaser0.B)
    events = [(t, dv) for t, dv in zip(plan.times, plan.impulses) if np.any(dv)]
    t_end = (plan.times[-1] if plan.times else 0.0) if t_end is None else t_end
    report = ConstraintReport()
    for dv in plan.impulses:
        report.update("impulse_bound", check_impulse_bound(dv, c), 0.0)

    def deriv(t, y):
        xc, tg = y
        a = astro.gravity_j2_accel(xc[:3], env.mu_si, env.j2, env.earth_radius_si)
        if env.disturbance_force_model.kind != "zero":
            a = a + profile(t) @ astro.disturbance_force(t, env) / chaser_mass
        return np.concatenate([xc[3:], a]), target_derivative(tg, bp_t, env, t)

    y = (np.concatenate([chaser0.p, chaser0.v]), target0)
    times, chasers, targets = [], [], []

    def record(t, y):
        xc, tg = y
        B = profile(t)
        ch = RigidBodyState(xc[:3].copy(), xc[3:].copy(), B, np.zeros(3))
        times.append(t)
        chasers.append(ch)
        targets.append(tg)
        d = xc[:3] - tg.p
        rng = np.linalg.norm(d)
        report.update("keep_out", check_keep_out(d, c), t)
        if 0 < rng <= c.mid_range_outer:
            report.update("cone", check_cone(tg.B.T @ d, c), t)
            report.update("fov", check_fov(-d, B, c), t)
            report.update("velocity_profile", check_velocity_profile(d, xc[3:] - tg.v, c), t)

    record(0.0, y)
    t = 0.0
    bounds = [e[0] for e in events] + [t_end]
    k = 0
    for seg_end in bounds:
        if seg_end > t:
            tr = propagate(deriv, y, t, seg_end, cfg, stride=stride)
            for tt, yy in zip(tr.times[1:], tr.states[1:]):
                record(tt, yy)
            y, t = tr.final, seg_end
        if k < len(events):
            dv_body = events[k][1]
            xc, tg = y
            xc = xc.copy()
            xc[3:] += profile(t) @ dv_body
            y = (xc, tg)
            record(t, y)
            k += 1
    return times, chasers, targets, report


# -- optimizer ------------------------------------------------------------------


def _uniform_grid(n, horizon, q):
    times = np.round(np.linspace(0.0, horizon, n) / q) * q
    times[-1] = horizon
    return times


def _phase_rates(chaser0, target0, T, env, sample_step=60.0):
    """Mean angular rates in the target's initial orbit plane, measured over ``[0, T]``.

    Numerical fitting folds the J2 drift of both orbits into the rates. Returns
    ``((n_c, n_t), (a_c, a_t), lead)`` with the mean radii and the initial angle of
    the target ahead of the chaser.
    """
    h = np.cross(target0.p, target0.v)
    h /= np.linalg.norm(h)
    e1 = target0.p / np.linalg.norm(target0.p)
    e2 = np.cross(h, e1)
    mu, j2, re = env.mu_si, env.j2, env.earth_radius_si
    y0 = np.r_[chaser0.p, chaser0.v, target0.p, target0.v]
    t_eval = np.arange(0.0, T, sample_step)
    sol = solve_ivp(lambda t, y: _two_body_rhs(y.reshape(-1, 6), mu, j2, re).ravel(), (0.0, T), y0,
                    method="DOP853", rtol=1e-10, atol=1e-3, t_eval=t_eval)
    Y = sol.y.reshape(2, 6, -1)
    rates, radii, angle0 = [], [], []
    for k in range(2):
        P = Y[k, :3, :]
        ang = np.unwrap(np.arctan2(e2 @ P, e1 @ P))
        slope, icpt = np.polyfit(t_eval, ang, 1)
        rates.append(slope)
        radii.append(float(np.mean(np.linalg.norm(P, axis=0))))
        angle0.append(icpt)
    lead = angle0[1] - angle0[0]
    return tuple(rates), tuple(radii), lead


def phasing_guess(chaser0: RigidBodyState, target0: RigidBodyState, goal: GoalWindow, env,
                  n_impulses: int, quantum: float, hold: Optional[float] = None):
    """Impulse grid and initial impulses for a coast-Hohmann-match transfer.

    The chaser coasts until the phase angle suits a Hohmann transfer to the target
    radius, burns tangentially, then matches the target velocity on arrival (this
    absorbs the plane change) and holds alongside until ``goal.time``. The remaining
    grid slots are spread evenly with zero initial impulses. Returns
    ``(times, dv_inertial (n, 3))`` or ``None`` when no phasing solution fits.
    """
    mu = env.mu_si
    T = goal.time
    (n1, n2), (a1, a2), lead = _phase_rates(chaser0, target0, T, env)
    r2 = a2
    at = 0.5 * (a1 + a2)
    t_h = np.pi * np.sqrt(at**3 / mu)
    hold = 2 * np.pi / n2 if hold is None else hold
    # burn at t1 so that target sits at the chaser's apoapsis after t_h
    dn = n1 - n2
    if dn == 0 or n_impulses < 3:
        return None
    base = (lead + n2 * t_h - np.pi) / dn
    period = 2 * np.pi / abs(dn)
    k_max = np.floor((T - hold - t_h - base) / period)
    t1 = base + k_max * period
    if t1 < 0 or t1 + t_h > T:
        return None
    t1 = np.round(t1 / quantum) * quantum
    t2 = np.round((t1 + t_h) / quantum) * quantum
    times = _uniform_grid(n_impulses - 2, T, quantum)
    times = np.sort(np.r_[times[:-1], t1, t2, T])
    times = times[np.r_[True, np.diff(times) > quantum / 2]]
    fill = n_impulses - len(times)
    if fill:
        gaps = np.diff(times)
        for _ in range(fill):
            i = int(np.argmax(gaps))
            times = np.insert(times, i + 1, np.round((times[i] + gaps[i] / 2) / quantum) * quantum)
            gaps = np.diff(times)
    dv = np.zeros((len(times), 3))
    xc0 = np.r_[chaser0.p, chaser0.v]
    xt0 = np.r_[target0.p, target0.v]
    i1 = int(np.argmin(np.abs(times - t1)))
    i2 = int(np.argmin(np.abs(times - t2)))
    xc1, _, _ = batch_propagate(xc0, xt0, [], np.zeros((1, 0, 3)), times[i1], env)
    rb = np.linalg.norm(xc1[0, :3])
    vb = xc1[0, 3:]
    dv1 = (np.sqrt(mu / rb) * (np.sqrt(2 * r2 / (rb + r2)) - 1.0)) * vb / np.linalg.norm(vb)
    dv[i1] = dv1
    xc2, xt2, _ = batch_propagate(xc0, xt0, [times[i1]], dv1[None, None, :], times[i2], env)
    dv[i2] = xt2[3:] - xc2[0, 3:]
    return times, dv


def impulse_times(settings: OptimizerSettings, horizon: float):
    if settings.times is not None:
        times = np.asarray(settings.times, float)
    else:
        times = _uniform_grid(settings.n_impulses, horizon, settings.grid_quantum)
    if np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > horizon + 1e-9:
        raise InvalidArgumentError("impulse grid must be strictly increasing within [0, horizon]")
    return times


class _TerminalModel:
    """Terminal window error as a function of the stacked inertial impulses."""

    def __init__(self, chaser0, target0, goal, times, env, s: OptimizerSettings):
        self.xc0 = np.concatenate([chaser0.p, chaser0.v])
        self.xt0 = np.concatenate([target0.p, target0.v])
        self.goal = goal
        self.times = times
        self.env = env
        self.s = s
        self.n_evals = 0

    def terminal(self, dvs):
        """Scaled window errors ``[dpos/1000 (km), dvel (m/s)]`` for each candidate."""
        s = self.s
        self.n_evals += len(dvs)
        try:
            xc, xt, rmin = batch_propagate(self.xc0, self.xt0, self.times, dvs, self.goal.time, self.env,
                                           s.rtol, s.atol, s.sample_step)
        except (InvalidArgumentError, DomainError, FloatingPointError):
            # e.g. a candidate diving into the Earth; treated as infinitely far off
            return np.full((len(dvs), 6), np.inf), np.zeros(len(dvs))
        d = xc[:, :3] - xt[:3]
        w = xc[:, 3:] - xt[3:]
        ed = (d - np.array(self.goal.d)) / 1000.0
        ew = w - np.array(self.goal.w)
        return np.hstack([ed, ew]), rmin

    def jacobian(self, x, delta):
        n = x.size
        cands = np.repeat(x.reshape(1, -1), n + 1, axis=0)
        cands[1:] += delta * np.eye(n)
        F, rmin = self.terminal(cands.reshape(n + 1, -1, 3))
        return F[0], (F[1:] - F[0]).T / delta, rmin[0]


def _tol(goal):
    return np.r_[np.full(3, goal.pos_tol / 1000.0), np.full(3, goal.vel_tol)]


def _window_violation(f, goal, frac=1.0):
    return np.maximum(np.abs(f) - frac * _tol(goal), 0.0)


def _sum_norms(x) -> float:
    return float(np.sum(np.linalg.norm(np.reshape(x, (-1, 3)), axis=1)))


def _correction(f, A, goal, frac):
    """Minimum-norm step moving the linearized terminal error into ``frac`` of the window."""
    lim = frac * _tol(goal)
    target = np.clip(f, -lim, lim)
    return -np.linalg.lstsq(A, f - target, rcond=None)[0]


def _restore(model, x, goal, s: OptimizerSettings, frac, history):
    """Damped Newton iterations (minimum-norm steps) until the window is met."""
    scale = _tol(goal)
    f, A, rmin = model.jacobian(x, s.fd_step)
    for _ in range(s.max_restore_iter):
        viol = _window_violation(f, goal, frac)
        if not np.any(viol > 0):
            break
        dx = _correction(f, A, goal, frac)
        err = np.linalg.norm(viol / scale)
        step = 1.0
        while step > 1e-4:
            fc, _ = model.terminal((x + step * dx).reshape(1, -1, 3))
            if np.linalg.norm(_window_violation(fc[0], goal, frac) / scale) < (1 - 0.1 * step) * err:
                break
            step *= 0.5
        x = x + step * dx
        f, A, rmin = model.jacobian(x, s.fd_step)
        history.append({"stage": "restore", "J": _sum_norms(x) ** 2,
                        "window_violation": float(np.max(_window_violation(f, goal)))})
    return x, f, A, rmin


def _project(model, x, f, A, goal, frac, max_iter=12):
    """Chord iterations with a frozen Jacobian back into ``frac`` of the window."""
    rmin = np.inf
    scale = _tol(goal)
    err = np.inf
    for _ in range(max_iter):
        viol = _window_violation(f, goal, frac)
        if not np.any(viol > 0):
            return x, f, rmin, True
        if not np.all(np.isfinite(f)):
            return x, f, rmin, False
        e = np.linalg.norm(viol / scale)
        if e > 0.5 * err:
            # not contracting; a fresh Jacobian is cheaper than more chords
            return x, f, rmin, False
        err = e
        x = x + _correction(f, A, goal, frac)
        fc, rm = model.terminal(x.reshape(1, -1, 3))
        f, rmin = fc[0], rm[0]
    return x, f, rmin, not np.any(_window_violation(f, goal, frac) > 0)


def _solve_subproblem(x, f, A, radius, goal, c: ConstraintSet, frac):
    """SOCP: minimize sum ||x + dx|| with the linearized window and a box trust region."""
    n = x.size // 3
    dx = cp.Variable(x.size)
    new = cp.reshape(x + dx, (n, 3), order="C")
    lim = frac * _tol(goal)
    lin = f + A @ dx
    cons = [lin <= lim, lin >= -lim, cp.norm(dx, "inf") <= radius]
    if c.per_axis_bound:
        cons.append(cp.abs(x + dx) <= c.dv_bound / np.sqrt(3.0))
    else:
        cons.append(cp.norm(new, 2, axis=1) <= c.dv_bound)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.norm(new, 2, axis=1))), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        prob.solve(solver=cp.SCS, eps=1e-9)
    if dx.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
        return np.zeros_like(x), np.inf
    return np.asarray(dx.value), float(prob.value)


def _scp(model: _TerminalModel, x, f, A, rmin, goal, c, s: OptimizerSettings, frac, history):
    """Trust-region successive convexification from a window-feasible ``x``.

    Each SOCP step is projected back into the window; it is accepted only if the
    true ``sum ||dv||`` decreases, so accepted iterates are feasible and monotone.
    """
    S = _sum_norms(x)
    radius = s.trust_radius
    trail = [S]
    for _ in range(s.max_iter):
        if len(trail) > 5 and trail[-6] - trail[-1] < 5 * s.stall_tol * trail[-1]:
            break
        dx, pred = _solve_subproblem(x, f, A, radius, goal, c, frac)
        if not np.isfinite(pred):
            radius *= 0.5
            if radius < 1e-7:
                break
            continue
        if S - pred <= 1e-10 * max(S, 1.0):
            break
        fc, rmc = model.terminal((x + dx).reshape(1, -1, 3))
        xc, fc, rmc2, ok = _project(model, x + dx, fc[0], A, goal, frac)
        Sc = _sum_norms(xc)
        rho = (S - Sc) / (S - pred)
        accepted = ok and Sc < S
        if accepted:
            trail.append(Sc)
            x, S = xc, Sc
            f, A, rmin = model.jacobian(x, s.fd_step)
            if rho > 0.5:
                radius = min(2.0 * radius, c.dv_bound)
            elif rho < 0.25:
                radius *= 0.5
        else:
            radius *= 0.25
        history.append({"stage": f"scp@{frac:g}", "J": S**2, "radius": radius, "accepted": bool(accepted),
                        "rho": float(rho), "window_violation": float(np.max(_window_violation(f, goal)))})
        if radius < 1e-7:
            break
    return x, f, A, rmin


def _local_optimality(x, f, A, goal, c, delta=1e-3, slope_tol=1e-4):
    """First-order check: no single +-delta axis perturbation lowers J and stays feasible.

    Improvements in ``sum ||dv||`` below ``slope_tol * delta`` are solver noise.
    """
    S0 = float(np.sum(np.linalg.norm(x.reshape(-1, 3), axis=1)))
    improving = []
    for k in range(x.size):
        for sgn in (1.0, -1.0):
            xp = x.copy()
            xp[k] += sgn * delta
            fp = f + A[:, k] * sgn * delta
            feasible = not np.any(_window_violation(fp, goal) > 0) and all(
                check_impulse_bound(v, c) >= 0 for v in xp.reshape(-1, 3)
            )
            S = float(np.sum(np.linalg.norm(xp.reshape(-1, 3), axis=1)))
            if feasible and S < S0 - slope_tol * delta:
                improving.append({"impulse": k // 3, "axis": k % 3, "sign": sgn})
    return {"locally_optimal": not improving, "improving_perturbations": improving[:10], "delta": delta}


def optimize_plan(
    chaser0: RigidBodyState, target0: RigidBodyState, goal: GoalWindow, n_impulses: int,
    c: ConstraintSet, env, settings: OptimizerSettings = OptimizerSettings(),
    attitude_profile: Optional[Callable] = None,
) -> ImpulsePlan:
    """Minimum-``J`` impulse plan reaching ``goal`` (see module docstring).

    The returned plan stores body-frame impulses (rotated with ``attitude_profile``,
    default: the chaser's initial attitude held fixed) and metadata describing
    feasibility, worst margins, local optimality and the iteration history.
    Raises :class:`InfeasiblePlanError` if the window cannot be met.
    """
    if n_impulses < 1:
        raise InvalidArgumentError("n_impulses must be >= 1")
    if settings.n_impulses != n_impulses and settings.times is None:
        settings = OptimizerSettings(**{**asdict(settings), "n_impulses": n_impulses})
    guess = None
    if settings.times is None and settings.initial_guess == "phasing":
        guess = phasing_guess(chaser0, target0, goal, env, n_impulses, settings.grid_quantum)
    if guess is not None:
        times, x = guess[0], guess[1].ravel()
    else:
        times = impulse_times(settings, goal.time)
        x = np.zeros(3 * len(times))
    n = len(times)
    profile = attitude_profile or _hold_attitude(chaser0.B)
    rng = np.random.default_rng(settings.seed)
    x = x + settings.init_jitter * rng.standard_normal(3 * n)

    model = _TerminalModel(chaser0, target0, goal, times, env, settings)
    history = []
    x, f, A, rmin = _restore(model, x, goal, settings, settings.window_fractions[0], history)
    if not np.any(_window_violation(f, goal, settings.window_fractions[0]) > 0):
        for frac in settings.window_fractions:
            x, f, A, rmin = _scp(model, x, f, A, rmin, goal, c, settings, frac, history)

    impulses_inertial = x.reshape(n, 3)
    impulses_body = [profile(t).T @ dv for t, dv in zip(times, impulses_inertial)]
    margins = {
        "terminal_position": float(goal.pos_tol - np.max(np.abs(f[:3])) * 1000.0),
        "terminal_velocity": float(goal.vel_tol - np.max(np.abs(f[3:]))),
        "keep_out": float(rmin - c.r_min),
        "impulse_bound": float(min(check_impulse_bound(dv, c) for dv in impulses_inertial)),
    }
    feasible = (
        margins["terminal_position"] >= -EPS_FEAS
        and margins["terminal_velocity"] >= -EPS_FEAS
        and margins["keep_out"] >= -EPS_FEAS
        and margins["impulse_bound"] >= -EPS_FEAS
    )
    best = []
    for h in history:
        prev = best[-1] if best else np.inf
        best.append(min(prev, h["J"]) if h["window_violation"] <= 0 else prev)
    J_final = _sum_norms(x) ** 2
    meta = {
        "seed": settings.seed,
        "feasible": feasible,
        "worst_margins": margins,
        "impulses_inertial": impulses_inertial.tolist(),
        "total_dv": float(np.sum(np.linalg.norm(impulses_inertial, axis=1))),
        "terminal_error_m": (f[:3] * 1000.0).tolist(),
        "terminal_velocity_error": f[3:].tolist(),
        "burn_durations_s": [float(np.linalg.norm(dv) * settings.chaser_mass / settings.max_thrust)
                             for dv in impulses_inertial],
        "iterations": len(history),
        "objective_history": [h["J"] for h in history] + [J_final],
        "best_feasible_objective_history": [b for b in best if np.isfinite(b)] + ([J_final] if feasible else []),
        "n_trajectory_evaluations": model.n_evals,
        "iteration_log": history,
        "goal": asdict(goal),
    }
    meta.update(_local_optimality(x, f, A, goal, c))
    plan = ImpulsePlan(list(times), impulses_body, metadata=meta)
    if not feasible:
        raise InfeasiblePlanError("optimizer did not reach a feasible plan", plan, margins)
    return plan
