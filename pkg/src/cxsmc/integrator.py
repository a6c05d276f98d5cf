"""Fixed-step RK4 on states that mix vectors and rotation matrices.

A state is a plain ``ndarray``, a :class:`~cxsmc.dynamics.RigidBodyState`, or a
tuple of those. The derivative callable has signature ``f(t, state)`` and returns
the matching structure (``ndarray`` / ``RigidBodyDerivative``).

Vector components use classical RK4. Attitudes use either a Munthe-Kaas style
exponential-map update ``B <- B exp(h * w_eff)`` (stage rates corrected by the
truncated inverse right Jacobian) or RK4 on the matrix entries followed by
re-orthonormalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import RigidBodyDerivative, RigidBodyState, cross
from .errors import IntegrationError, InvalidArgumentError
from .so3 import orthonormalize, so3_exp

EXP_MAP = "exp_map"
MATRIX_ODE = "matrix_ode_with_reorthonormalization"


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1.0  # s
    attitude_update: str = EXP_MAP

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidArgumentError("integrator step must be positive")
        if self.attitude_update not in (EXP_MAP, MATRIX_ODE):
            raise InvalidArgumentError(f"unknown attitude update {self.attitude_update!r}")


# -- structure packing -------------------------------------------------------


def _flatten(state):
    """Return ``(x, rots, layout)`` where layout records how to rebuild."""
    if isinstance(state, np.ndarray) or np.isscalar(state):
        x = np.atleast_1d(np.asarray(state, dtype=float))
        return x, [], ("array", np.shape(state))
    if isinstance(state, RigidBodyState):
        x = np.concatenate([state.p, state.v, state.omega]).astype(float)
        return x, [np.asarray(state.B, float)], ("body",)
    if isinstance(state, tuple):
        xs, rots, layouts = [], [], []
        for item in state:
            x, r, lay = _flatten(item)
            xs.append(x)
            rots.extend(r)
            layouts.append((lay, x.size, len(r)))
        return np.concatenate(xs), rots, ("tuple", layouts)
    raise InvalidArgumentError(f"unsupported state type {type(state).__name__}")


def _unflatten(x, rots, layout):
    kind = layout[0]
    if kind == "array":
        return x.reshape(layout[1]) if layout[1] != () else x[0]
    if kind == "body":
        return RigidBodyState(p=x[0:3], v=x[3:6], B=rots[0], omega=x[6:9])
    out, i, j = [], 0, 0
    for lay, n, m in layout[1]:
        out.append(_unflatten(x[i:i + n], rots[j:j + m], lay))
        i += n
        j += m
    return tuple(out)


def _flatten_derivative(d):
    if isinstance(d, RigidBodyDerivative):
        x = np.concatenate([d.p_dot, d.v_dot, d.omega_dot])
        return x, [np.asarray(d.body_rate, float)], [np.asarray(d.B_dot, float)]
    if isinstance(d, tuple):
        xs, ws, bds = [], [], []
        for item in d:
            x, w, bd = _flatten_derivative(item)
            xs.append(x)
            ws.extend(w)
            bds.extend(bd)
        return np.concatenate(xs), ws, bds
    return np.atleast_1d(np.asarray(d, dtype=float)), [], []


def _dexpinv(u, w):
    # Jr^-1(u) w truncated after the second-order term; sufficient for order 4.
    uw = cross(u, w)
    return w + 0.5 * uw + cross(u, uw) / 12.0


def _check(x, ws, t):
    if not np.all(np.isfinite(x)) or any(not np.all(np.isfinite(w)) for w in ws):
        raise IntegrationError("non-finite derivative", t)


# -- stepping -----------------------------------------------------------------


def rk4_step(derivative: Callable, state, t: float, cfg: IntegratorConfig, h: Optional[float] = None):
    """Advance ``state`` from ``t`` to ``t + h`` (``h`` defaults to ``cfg.step``)."""
    h = cfg.step if h is None else h
    x0, R0, layout = _flatten(state)

    def f(tt, x, Rs):
        d = derivative(tt, _unflatten(x, Rs, layout))
        xd, ws, bds = _flatten_derivative(d)
        _check(xd, ws, tt)
        return xd, ws, bds

    if not R0:
        k1, _, _ = f(t, x0, R0)
        k2, _, _ = f(t + h / 2, x0 + h / 2 * k1, R0)
        k3, _, _ = f(t + h / 2, x0 + h / 2 * k2, R0)
        k4, _, _ = f(t + h, x0 + h * k3, R0)
        return _unflatten(x0 + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), [], layout)

    if cfg.attitude_update == EXP_MAP:
        k1, w1, _ = f(t, x0, R0)
        r1 = [h * w for w in w1]
        u2 = [0.5 * r for r in r1]
        k2, w2, _ = f(t + h / 2, x0 + h / 2 * k1, [R @ so3_exp(u) for R, u in zip(R0, u2)])
        r2 = [h * _dexpinv(u, w) for u, w in zip(u2, w2)]
        u3 = [0.5 * r for r in r2]
        k3, w3, _ = f(t + h / 2, x0 + h / 2 * k2, [R @ so3_exp(u) for R, u in zip(R0, u3)])
        r3 = [h * _dexpinv(u, w) for u, w in zip(u3, w3)]
        u4 = r3
        k4, w4, _ = f(t + h, x0 + h * k3, [R @ so3_exp(u) for R, u in zip(R0, u4)])
        r4 = [h * _dexpinv(u, w) for u, w in zip(u4, w4)]
        R1 = [
            orthonormalize(R @ so3_exp((a + 2 * b + 2 * c + d) / 6.0))
            for R, a, b, c, d in zip(R0, r1, r2, r3, r4)
        ]
    else:
        k1, _, b1 = f(t, x0, R0)
        Rs = [orthonormalize(R + h / 2 * b) for R, b in zip(R0, b1)]
        k2, _, b2 = f(t + h / 2, x0 + h / 2 * k1, Rs)
        Rs = [orthonormalize(R + h / 2 * b) for R, b in zip(R0, b2)]
        k3, _, b3 = f(t + h / 2, x0 + h / 2 * k2, Rs)
        Rs = [orthonormalize(R + h * b) for R, b in zip(R0, b3)]
        k4, _, b4 = f(t + h, x0 + h * k3, Rs)
        R1 = [
            orthonormalize(R + h / 6 * (a + 2 * b + 2 * c + d))
            for R, a, b, c, d in zip(R0, b1, b2, b3, b4)
        ]
    x1 = x0 + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return _unflatten(x1, R1, layout)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    event_time: Optional[float] = None

    @property
    def final(self):
        return self.states[-1]


def locate_event(derivative, state, t, h, cfg, event_fn, tol=1e-3):
    """Bisect the sub-step ``tau`` in ``(0, h]`` at which ``event_fn`` first holds.

    ``event_fn`` must be False at ``(t, state)`` and True after the full step.
    Returns ``(t_event, state_event)`` with the event state on the True side.
    """
    lo, hi = 0.0, h
    s_hi = None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s_mid = rk4_step(derivative, state, t, cfg, h=mid)
        if event_fn(t + mid, s_mid):
            hi, s_hi = mid, s_mid
        else:
            lo = mid
    if s_hi is None:
        s_hi = rk4_step(derivative, state, t, cfg, h=hi)
    return t + hi, s_hi


def propagate(derivative, s0, t0: float, t1: float, cfg: IntegratorConfig, event_fn=None, stride: int = 1):
    """Fixed-step march from ``t0`` to ``t1`` with a final partial step.

    If ``event_fn(t, state)`` becomes True the march stops at the event, located by
    bisection to 1e-3 s. Every ``stride``-th step (and the last) is sampled.
    """
    if t1 < t0:
        raise InvalidArgumentError("t1 must not precede t0")
    traj = Trajectory(times=[t0], states=[s0])
    t, s = t0, s0
    n_full = int(np.floor((t1 - t0) / cfg.step + 1e-9))
    steps = [cfg.step] * n_full
    rem = (t1 - t0) - n_full * cfg.step
    if rem > 1e-9:
        steps.append(rem)
    for i, h in enumerate(steps):
        s_new = rk4_step(derivative, s, t, cfg, h=h)
        if event_fn is not None and event_fn(t + h, s_new):
            te, se = locate_event(derivative, s, t, h, cfg, event_fn)
            traj.times.append(te)
            traj.states.append(se)
            traj.event_time = te
            return traj
        t, s = (t0 + (i + 1) * cfg.step if h == cfg.step else t + h), s_new
        if (i + 1) % stride == 0 or i == len(steps) - 1:
            traj.times.append(t)
            traj.states.append(s)
    return traj


def apply_impulse(s: RigidBodyState, dv_body) -> RigidBodyState:
    """Instantaneous body-frame velocity increment; position is unchanged."""
    dv = np.asarray(dv_body, dtype=float)
    if not np.any(dv):
        return s
    return s.replace(v=s.v + s.B @ dv)
