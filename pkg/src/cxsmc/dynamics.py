"""Rigid-body dynamics of target and chaser, and their relative state.

Frame contract
--------------
* ``RigidBodyState.p`` and ``.v`` are inertial (ICRF), in m and m/s.
* ``RigidBodyState.B`` maps body-frame vectors to inertial.
* ``RigidBodyState.omega``, control force/torque and disturbances are body-frame.

The tilde quantities of the body-frame formulation (position and velocity resolved
in a body frame, with the transport terms ``Omega(w) p``) are recovered as
``B.T @ p`` and ``B.T @ v``; that is how :func:`relative_state` evaluates
``e_p = p_c - B_t^c p_t``. The relative state is resolved in the chaser body frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import astro
from .errors import InvalidArgumentError, InvalidInertiaError
from .so3 import is_rotation, skew, so3_log


def cross(a, b):
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


@dataclass(frozen=True)
class RigidBodyState:
    p: np.ndarray  # m, inertial
    v: np.ndarray  # m/s, inertial
    B: np.ndarray  # body -> inertial
    omega: np.ndarray  # rad/s, body

    def validate(self):
        for name in ("p", "v", "omega"):
            x = np.asarray(getattr(self, name), dtype=float)
            if x.shape != (3,) or not np.all(np.isfinite(x)):
                raise InvalidArgumentError(f"{name} must be a finite 3-vector")
        if not is_rotation(self.B, tol=1e-6):
            raise InvalidArgumentError("B is not a rotation matrix")
        return self

    def replace(self, **kw) -> "RigidBodyState":
        d = dict(p=self.p, v=self.v, B=self.B, omega=self.omega)
        d.update(kw)
        return RigidBodyState(**d)


@dataclass(frozen=True)
class RigidBodyDerivative:
    p_dot: np.ndarray
    v_dot: np.ndarray
    omega_dot: np.ndarray
    B_dot: np.ndarray
    body_rate: np.ndarray  # w such that B_dot = B @ skew(w)


@dataclass(frozen=True)
class BodyParams:
    mass: float  # kg
    inertia: np.ndarray  # kg m^2
    inertia_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if not self.mass > 0:
            raise InvalidArgumentError("mass must be positive")
        if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-12:
            raise InvalidInertiaError("inertia must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise InvalidInertiaError("inertia must be positive definite")
        object.__setattr__(self, "inertia", J)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(J))


@dataclass(frozen=True)
class RelativeState:
    """Chaser-relative errors, all resolved in the chaser body frame."""

    e_p: np.ndarray
    e_v: np.ndarray
    e_r: np.ndarray
    e_omega: np.ndarray


@dataclass(frozen=True)
class ControlInput:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N, chaser body
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N m, chaser body


ZERO_CONTROL = ControlInput()


def gravity_force_si(p, mass, env: astro.EnvironmentParams):
    """Inertial gravity + J2 force [N] for a position in metres."""
    return mass * astro.gravity_j2_accel(p, env.mu_si, env.j2, env.earth_radius_si)


def _rigid_body_derivative(s, bp, env, t, force_body, torque_body):
    g = astro.gravity_j2_accel(s.p, env.mu_si, env.j2, env.earth_radius_si)
    f_body = astro.disturbance_force(t, env) + force_body
    v_dot = g + (s.B @ f_body) / bp.mass
    J = bp.inertia
    w = s.omega
    torque = (
        -cross(w, J @ w)
        + astro.disturbance_torque(t, env)
        + astro.gravity_gradient_torque(s.B, s.p, J, env.mu_si)
        + torque_body
    )
    return RigidBodyDerivative(
        p_dot=np.array(s.v, dtype=float),
        v_dot=v_dot,
        omega_dot=bp.inertia_inv @ torque,
        B_dot=s.B @ skew(w),
        body_rate=np.array(w, dtype=float),
    )


_ZERO3 = np.zeros(3)


def target_derivative(s: RigidBodyState, bp: BodyParams, env: astro.EnvironmentParams, t: float):
    """Uncontrolled target: gravity + J2, disturbances, gravity gradient, Euler equations."""
    return _rigid_body_derivative(s, bp, env, t, _ZERO3, _ZERO3)


def chaser_derivative(s: RigidBodyState, bp: BodyParams, u: ControlInput, env: astro.EnvironmentParams, t: float):
    """As :func:`target_derivative` plus the body-frame control force and torque."""
    return _rigid_body_derivative(s, bp, env, t, np.asarray(u.force, float), np.asarray(u.torque, float))


def relative_state(chaser: RigidBodyState, target: RigidBodyState) -> RelativeState:
    """``e_p = p_c - B_t^c p_t``, ``e_v = v_c - B_t^c v_t``, ``e_r = log(B_t^T B_c)``,
    ``e_w = w_c - B_t^c w_t`` with body-resolved positions and velocities."""
    Bc, Bt = chaser.B, target.B
    Btc = Bc.T @ Bt
    p_c = Bc.T @ chaser.p
    p_t = Bt.T @ target.p
    v_c = Bc.T @ chaser.v
    v_t = Bt.T @ target.v
    return RelativeState(
        e_p=p_c - Btc @ p_t,
        e_v=v_c - Btc @ v_t,
        e_r=so3_log(Bt.T @ Bc),
        e_omega=chaser.omega - Btc @ target.omega,
    )


def relative_translational_dynamics(rel, chaser, target, bp_c, bp_t, u, env, t):
    """Relative acceleration ``de_v/dt`` (chaser body frame, m/s^2).

    Evaluated as::

        (F_c + F_j2c + F_dc)/M_c - B_t^c (F_dt + F_j2t)/M_t
            + (Omega(e_w) + Omega(B_t^c w_t)) B_t^c v_t - Omega(w_c) v_c

    with every force resolved in its own body frame. The target's gravity term and
    the frame rotation of ``w_t`` are kept so the expression is exact.
    """
    Bc, Bt = chaser.B, target.B
    Btc = Bc.T @ Bt
    v_c = Bc.T @ chaser.v
    v_t = Bt.T @ target.v
    f_c = (
        np.asarray(u.force, float)
        + Bc.T @ gravity_force_si(chaser.p, bp_c.mass, env)
        + astro.disturbance_force(t, env)
    )
    f_t = Bt.T @ gravity_force_si(target.p, bp_t.mass, env) + astro.disturbance_force(t, env)
    w_t_c = Btc @ target.omega
    return (
        f_c / bp_c.mass
        - Btc @ f_t / bp_t.mass
        + cross(rel.e_omega + w_t_c, Btc @ v_t)
        - cross(chaser.omega, v_c)
    )


def relative_rotational_dynamics(rel, chaser, desired_omega, desired_omega_dot, B_d_c, bp_c, u, env, t):
    """``de_w/dt = w_c_dot + e_w x B_d^c w_d - B_d^c w_d_dot`` with ``w_c_dot`` from the
    chaser's Euler equations. ``rel.e_omega`` must be ``w_c - B_d^c w_d``."""
    wdot_c = chaser_derivative(chaser, bp_c, u, env, t).omega_dot
    wd = B_d_c @ np.asarray(desired_omega, float)
    return wdot_c + cross(rel.e_omega, wd) - B_d_c @ np.asarray(desired_omega_dot, float)


def state_from_elements(el: astro.OrbitalElements, env: astro.EnvironmentParams, B=None, omega=None):
    r, v = astro.elements_to_cartesian(el, env)
    p, v = astro.to_si(r, v)
    return RigidBodyState(
        p=p,
        v=v,
        B=np.eye(3) if B is None else np.asarray(B, float),
        omega=np.zeros(3) if omega is None else np.asarray(omega, float),
    )
