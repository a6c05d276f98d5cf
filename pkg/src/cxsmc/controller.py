"""Cross-feedback sliding-mode controller (CxSMC).

Sliding surfaces couple the two channels::

    s_p = e_p_dot + lambda_p e_p + mu_p e_r
    s_r = e_r_dot + lambda_r e_r + mu_r e_p

and the force/torque laws enforce the exponential reaching law ``s_dot = -k s``
in closed loop. The reaching gains are scaled by ``M_c`` and ``J_c`` so that
``V1 = 1/2 s_p' M_c s_p + 1/2 s_r' J_c s_r`` obeys ``V1_dot = -k_p s_p' M_c s_p - k_r s_r' J_c s_r``.

Tracking is expressed through a :class:`Reference` (desired relative translation
and desired chaser attitude). All errors are resolved in the chaser body frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import astro
from .dynamics import BodyParams, ControlInput, RelativeState, RigidBodyState, cross, gravity_force_si
from .errors import InvalidArgumentError
from .so3 import right_jacobian_inv, so3_log


@dataclass(frozen=True)
class GainSet:
    lambda_p: float = 0.05
    lambda_r: float = 0.05
    mu_p: float = 0.005
    mu_r: float = 0.005
    k_p: float = 0.5
    k_r: float = 0.5

    def __post_init__(self):
        for name in ("lambda_p", "lambda_r", "mu_p", "mu_r", "k_p", "k_r"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"gain {name} must be strictly positive, got {v}")

    @property
    def reaching_rate(self) -> float:
        """lambda_2 = 2 min(k_p, k_r)."""
        return 2.0 * min(self.k_p, self.k_r)

    @property
    def sliding_rate(self) -> float:
        """lambda_4 = 2 min(lambda_p, lambda_r)."""
        return 2.0 * min(self.lambda_p, self.lambda_r)


@dataclass(frozen=True)
class SlidingSurfaces:
    s_p: np.ndarray
    s_r: np.ndarray


@dataclass(frozen=True)
class SaturationLimits:
    max_force: float = 0.0  # N per axis
    max_torque: float = 0.0  # N m per axis
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and not (self.max_force > 0 and self.max_torque > 0):
            raise InvalidArgumentError("saturation limits must be positive when enabled")


@dataclass(frozen=True)
class Reference:
    """Desired relative motion and chaser attitude at one instant.

    ``d``, ``w``, ``a`` are the desired chaser-minus-target position, velocity and
    acceleration (inertial). ``B_d`` is the desired chaser attitude (body->inertial),
    ``omega_d`` / ``omega_d_dot`` its body rate and rate derivative in the desired frame.
    """

    d: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    B_d: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega_d: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_d_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))


def sliding_surfaces(rel: RelativeState, e_p_dot, e_r_dot, g: GainSet) -> SlidingSurfaces:
    return SlidingSurfaces(
        s_p=np.asarray(e_p_dot, float) + g.lambda_p * rel.e_p + g.mu_p * rel.e_r,
        s_r=np.asarray(e_r_dot, float) + g.lambda_r * rel.e_r + g.mu_r * rel.e_p,
    )


def tracking_errors(chaser: RigidBodyState, target: RigidBodyState, ref: Reference) -> RelativeState:
    """Errors of the chaser against ``ref``, resolved in the chaser body frame."""
    BcT = chaser.B.T
    return RelativeState(
        e_p=BcT @ (chaser.p - target.p - ref.d),
        e_v=BcT @ (chaser.v - target.v - ref.w),
        e_r=so3_log(ref.B_d.T @ chaser.B),
        e_omega=chaser.omega - BcT @ ref.B_d @ ref.omega_d,
    )


def error_rates(rel: RelativeState, chaser: RigidBodyState, log_rate: str = "first_order"):
    """Time derivatives of ``e_p`` and ``e_r``.

    ``e_p`` lives in the rotating chaser frame, so ``de_p/dt = e_v - w_c x e_p``.
    ``de_r/dt`` is ``e_w`` (first-order) or ``Jr^-1(e_r) e_w`` (exact).
    """
    ep_dot = rel.e_v - cross(chaser.omega, rel.e_p)
    if log_rate == "exact":
        er_dot = right_jacobian_inv(rel.e_r) @ rel.e_omega
    elif log_rate == "first_order":
        er_dot = rel.e_omega
    else:
        raise InvalidArgumentError(f"unknown log_rate {log_rate!r}")
    return ep_dot, er_dot


def _saturate(x, limit):
    return np.clip(x, -limit, limit)


def control_force(
    rel, chaser, target, bp_c: BodyParams, bp_t: BodyParams, env, t, g: GainSet, s: SlidingSurfaces,
    e_p_dot, e_r_dot, ref: Reference | None = None, limits: SaturationLimits | None = None,
):
    """Force law in the chaser body frame [N].

    Term by term::

        -F_j2c - F_dc - M_c (Omega(e_w) + Omega(w_t)) B_t^c v_t + M_c Omega(w_c) v_c
        + B_t^c (M_c/M_t)(F_dt + F_j2t) - lambda_p M_c e_p_dot - mu_p M_c e_r_dot - k_p M_c s_p

    plus, when tracking a moving ``ref``, ``M_c (a_ref - w_c x w_ref)`` in chaser axes.
    ``e_p_dot`` and ``e_r_dot`` are true time derivatives (see :func:`error_rates`).
    """
    Bc, Bt = chaser.B, target.B
    BcT = Bc.T
    Btc = BcT @ Bt
    Mc, Mt = bp_c.mass, bp_t.mass
    v_c = BcT @ chaser.v
    v_t = Bt.T @ target.v
    e_w_t = chaser.omega - Btc @ target.omega  # target-relative angular velocity
    w_t_c = Btc @ target.omega
    F_j2c = BcT @ gravity_force_si(chaser.p, Mc, env)
    F_j2t = Bt.T @ gravity_force_si(target.p, Mt, env)
    F_dc = astro.disturbance_force(t, env)
    F_dt = astro.disturbance_force(t, env)
    F = (
        -F_j2c
        - F_dc
        - Mc * cross(e_w_t + w_t_c, Btc @ v_t)
        + Mc * cross(chaser.omega, v_c)
        + Btc @ ((Mc / Mt) * (F_dt + F_j2t))
        - g.lambda_p * Mc * np.asarray(e_p_dot, float)
        - g.mu_p * Mc * np.asarray(e_r_dot, float)
        - g.k_p * Mc * s.s_p
    )
    if ref is not None:
        F = F + Mc * (BcT @ ref.a - cross(chaser.omega, BcT @ ref.w))
    if limits is not None and limits.enabled:
        F = _saturate(F, limits.max_force)
    return F


def control_torque(
    rel, chaser, bp_c: BodyParams, desired_omega, desired_omega_dot, B_d_c, env, t, g: GainSet,
    s: SlidingSurfaces, e_r_dot, e_p_dot, limits: SaturationLimits | None = None,
    cross_term: str = "omega_d",
):
    """Torque law in the chaser body frame [N m].

    ``-T_dc - T_gc + Omega(w_c) J_c w_c - J_c e_w x B_d^c w_d + J_c B_d^c w_d_dot
    - lambda_r J_c e_r_dot - mu_r J_c e_p_dot - k_r J_c s_r``.

    ``cross_term="omega_d_dot"`` substitutes ``w_d_dot`` in the gyroscopic cross
    term instead of ``w_d``; only ``omega_d`` satisfies the reaching law exactly.
    """
    J = bp_c.inertia
    w_c = chaser.omega
    wd = np.asarray(desired_omega, float)
    wdd = np.asarray(desired_omega_dot, float)
    T_dc = astro.disturbance_torque(t, env)
    T_gc = astro.gravity_gradient_torque(chaser.B, chaser.p, J, env.mu_si)
    cross_vec = wd if cross_term == "omega_d" else wdd
    T = (
        -T_dc
        - T_gc
        + cross(w_c, J @ w_c)
        - J @ cross(rel.e_omega, B_d_c @ cross_vec)
        + J @ (B_d_c @ wdd)
        - g.lambda_r * (J @ np.asarray(e_r_dot, float))
        - g.mu_r * (J @ np.asarray(e_p_dot, float))
        - g.k_r * (J @ s.s_r)
    )
    if limits is not None and limits.enabled:
        T = _saturate(T, limits.max_torque)
    return T


@dataclass(frozen=True)
class ControlEvaluation:
    u: ControlInput
    rel: RelativeState
    surfaces: SlidingSurfaces
    e_p_rate: np.ndarray
    e_r_rate: np.ndarray


@dataclass(frozen=True)
class CxSMC:
    """Bundles gains and options; :meth:`evaluate` runs one control update.

    ``translation=False`` gives attitude-only operation: the force is zero and the
    translational error is not fed into ``s_r``. ``model_env`` is the environment the
    controller believes in (defaults to the plant's) for disturbance mismatch studies.
    """

    gains: GainSet = field(default_factory=GainSet)
    limits: SaturationLimits = field(default_factory=SaturationLimits)
    log_rate: str = "first_order"
    cross_term: str = "omega_d"
    model_env: astro.EnvironmentParams | None = None

    def evaluate(self, t, chaser, target, bp_c, bp_t, env, ref: Reference, translation: bool = True):
        env_c = self.model_env or env
        rel = tracking_errors(chaser, target, ref)
        if not translation:
            rel = RelativeState(np.zeros(3), np.zeros(3), rel.e_r, rel.e_omega)
        ep_rate, er_rate = error_rates(rel, chaser, self.log_rate)
        s = sliding_surfaces(rel, rel.e_v, rel.e_omega, self.gains)
        B_d_c = chaser.B.T @ ref.B_d
        torque = control_torque(
            rel, chaser, bp_c, ref.omega_d, ref.omega_d_dot, B_d_c, env_c, t, self.gains, s,
            er_rate, ep_rate, self.limits, self.cross_term,
        )
        if translation:
            force = control_force(
                rel, chaser, target, bp_c, bp_t, env_c, t, self.gains, s, ep_rate, er_rate, ref, self.limits
            )
        else:
            force = np.zeros(3)
        return ControlEvaluation(ControlInput(force, torque), rel, s, ep_rate, er_rate)
