"""Orbital environment: element conversion, gravity with J2, gravity-gradient torque, disturbances.

Orbital-level quantities (elements, positions handed to :func:`elements_to_cartesian`
and :func:`gravity_j2_force`) are in km and km/s. Rigid-body states are SI; the one
place the two meet is :func:`to_si`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np

from .errors import DomainError, InvalidArgumentError, InvalidInertiaError, UnsupportedOrbitError

MU_EARTH = 398600.4418  # km^3/s^2
J2_EARTH = 1.08263e-3
R_EARTH = 6378.137  # km

KM = 1000.0


def to_si(position_km, velocity_kms=None):
    """Convert km (and km/s) to m (and m/s). The single km<->SI boundary."""
    p = np.asarray(position_km, dtype=float) * KM
    if velocity_kms is None:
        return p
    return p, np.asarray(velocity_kms, dtype=float) * KM


@dataclass(frozen=True)
class OrbitalElements:
    semi_major_axis: float  # km
    eccentricity: float
    inclination: float  # rad
    raan: float  # rad
    arg_periapsis: float  # rad
    true_anomaly: float  # rad

    @classmethod
    def from_degrees(cls, a, e, i, raan, argp, nu):
        return cls(a, e, *np.radians([i, raan, argp, nu]))


@dataclass(frozen=True)
class DisturbanceModel:
    """Deterministic per-axis disturbance generator.

    ``kind`` is one of ``zero``, ``constant`` or ``sinusoidal``. For the sinusoidal
    model each axis evaluates ``amplitude * sin(2*pi*t/period)``.
    """

    kind: str = "zero"
    amplitude: tuple = (0.0, 0.0, 0.0)
    period: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "sinusoidal"):
            raise InvalidArgumentError(f"unknown disturbance model {self.kind!r}")
        amp = np.asarray(self.amplitude, dtype=float)
        per = np.broadcast_to(np.asarray(self.period, dtype=float), (3,))
        if amp.shape != (3,) or np.any(amp < 0) or not np.all(np.isfinite(amp)):
            raise InvalidArgumentError("disturbance amplitudes must be three finite values >= 0")
        if self.kind == "sinusoidal" and np.any(per <= 0):
            raise InvalidArgumentError("sinusoidal disturbance periods must be > 0")
        object.__setattr__(self, "amplitude", tuple(amp))
        object.__setattr__(self, "period", tuple(per))

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(3)
        amp = np.array(self.amplitude)
        if self.kind == "constant":
            return amp
        return amp * np.sin(2.0 * np.pi * t / np.array(self.period))


@dataclass(frozen=True)
class EnvironmentParams:
    mu: float = MU_EARTH  # km^3/s^2
    j2: float = J2_EARTH
    earth_radius: float = R_EARTH  # km
    disturbance_force_model: DisturbanceModel = field(default_factory=DisturbanceModel)
    disturbance_torque_model: DisturbanceModel = field(default_factory=DisturbanceModel)

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidArgumentError("mu must be positive")
        if self.j2 < 0:
            raise InvalidArgumentError("j2 must be non-negative")
        if not self.earth_radius > 0:
            raise InvalidArgumentError("earth_radius must be positive")

    @property
    def mu_si(self) -> float:
        return self.mu * KM**3

    @property
    def earth_radius_si(self) -> float:
        return self.earth_radius * KM


def elements_to_cartesian(el: OrbitalElements, env: EnvironmentParams = EnvironmentParams()):
    """Perifocal-to-inertial conversion. Returns ``(r [km], v [km/s])``."""
    a, e = el.semi_major_axis, el.eccentricity
    if not 0.0 <= e < 1.0:
        raise UnsupportedOrbitError(f"eccentricity {e} is outside [0, 1)")
    if a <= env.earth_radius:
        raise UnsupportedOrbitError(f"semi-major axis {a} km is inside the Earth")
    p = a * (1.0 - e * e)
    nu = el.true_anomaly
    r_pf = p / (1.0 + e * np.cos(nu)) * np.array([np.cos(nu), np.sin(nu), 0.0])
    v_pf = np.sqrt(env.mu / p) * np.array([-np.sin(nu), e + np.cos(nu), 0.0])
    Q = _perifocal_to_inertial(el.raan, el.inclination, el.arg_periapsis)
    return Q @ r_pf, Q @ v_pf


def _perifocal_to_inertial(raan, inc, argp):
    cO, sO = np.cos(raan), np.sin(raan)
    ci, si = np.cos(inc), np.sin(inc)
    cw, sw = np.cos(argp), np.sin(argp)
    return np.array([
        [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
        [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
        [sw * si, cw * si, ci],
    ])


def cartesian_to_elements(r, v, env: EnvironmentParams = EnvironmentParams()) -> OrbitalElements:
    """Inverse of :func:`elements_to_cartesian` for non-circular, inclined orbits."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    mu = env.mu
    h = np.cross(r, v)
    hn = np.linalg.norm(h)
    node = np.cross([0.0, 0.0, 1.0], h)
    nn = np.linalg.norm(node)
    rn = np.linalg.norm(r)
    e_vec = np.cross(v, h) / mu - r / rn
    e = np.linalg.norm(e_vec)
    energy = 0.5 * v @ v - mu / rn
    if e >= 1.0 or energy >= 0:
        raise UnsupportedOrbitError("state is not on a closed orbit")
    a = -mu / (2.0 * energy)
    if nn < 1e-12:
        raise UnsupportedOrbitError("equatorial orbit: node undefined")
    inc = np.arccos(np.clip(h[2] / hn, -1.0, 1.0))
    raan = np.arctan2(node[1], node[0]) % (2 * np.pi)
    argp = np.arctan2(np.cross(node, e_vec) @ h / hn, node @ e_vec) % (2 * np.pi)
    nu = np.arctan2(np.cross(e_vec, r) @ h / hn, e_vec @ r) % (2 * np.pi)
    return OrbitalElements(a, e, inc, raan, argp, nu)


def specific_energy(r, v, mu=MU_EARTH) -> float:
    return 0.5 * float(np.dot(v, v)) - mu / float(np.linalg.norm(r))


def gravity_j2_accel(p, mu: float, j2: float, radius: float):
    """Two-body plus J2 acceleration. Works on ``(3,)`` or ``(N, 3)`` arrays in any
    consistent unit system (``mu`` and ``radius`` must match ``p``)."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        return _gravity_j2_accel_one(p, mu, j2, radius)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r2 = x * x + y * y + z * z
    r = np.sqrt(r2)
    r3 = r2 * r
    k = 1.5 * j2 * mu * radius * radius / (r2 * r3)
    zr2 = z * z / r2
    ax = -mu * x / r3 - k * x * (1.0 - 5.0 * zr2)
    ay = -mu * y / r3 - k * y * (1.0 - 5.0 * zr2)
    az = -mu * z / r3 - k * z * (3.0 - 5.0 * zr2)
    return np.stack([ax, ay, az], axis=-1)


def _gravity_j2_accel_one(p, mu, j2, radius):
    # scalar path: the per-step integrators call this millions of times
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    r2 = x * x + y * y + z * z
    r3 = r2 * math.sqrt(r2)
    k = 1.5 * j2 * mu * radius * radius / (r2 * r3)
    zr2 = z * z / r2
    m = mu / r3
    return np.array([
        -m * x - k * x * (1.0 - 5.0 * zr2),
        -m * y - k * y * (1.0 - 5.0 * zr2),
        -m * z - k * z * (3.0 - 5.0 * zr2),
    ])


def _det3(J) -> float:
    return float(
        J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
        - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
        + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0])
    )


def gravity_j2_force(position_km, mass: float, env: EnvironmentParams = EnvironmentParams(), frame=None):
    """Gravity + J2 force in newtons on a body of ``mass`` kg at ``position_km``.

    The result is inertial unless ``frame`` (body->inertial rotation) is given, in
    which case it is resolved in that body frame.
    """
    p = np.asarray(position_km, dtype=float)
    if np.linalg.norm(p) <= env.earth_radius:
        raise DomainError("position is inside the Earth")
    acc = gravity_j2_accel(to_si(p), env.mu_si, env.j2, env.earth_radius_si)
    force = mass * acc
    if frame is not None:
        force = np.asarray(frame).T @ force
    return force


def gravity_gradient_torque(attitude, position, inertia, mu_si: float = MU_EARTH * KM**3):
    """Body-frame gravity-gradient torque ``3 mu / r^5 * p_b x (J p_b)`` [N m].

    ``position`` is inertial in metres; ``attitude`` maps body to inertial.
    """
    J = np.asarray(inertia, dtype=float)
    if abs(_det3(J)) < 1e-12:
        raise InvalidInertiaError("inertia matrix is singular")
    p = np.asarray(position, dtype=float)
    r = math.sqrt(float(p @ p))
    if r == 0.0:
        raise DomainError("gravity gradient undefined at the origin")
    pb = np.asarray(attitude).T @ p
    q = J @ pb
    k = 3.0 * mu_si / r**5
    return k * np.array([pb[1] * q[2] - pb[2] * q[1], pb[2] * q[0] - pb[0] * q[2], pb[0] * q[1] - pb[1] * q[0]])


def disturbance_force(t: float, env: EnvironmentParams) -> np.ndarray:
    return env.disturbance_force_model(t)


def disturbance_torque(t: float, env: EnvironmentParams) -> np.ndarray:
    return env.disturbance_torque_model(t)


def orbital_period(a_km: float, mu: float = MU_EARTH) -> float:
    return 2.0 * np.pi * np.sqrt(a_km**3 / mu)


def hohmann_delta_v(r1_km: float, r2_km: float, mu: float = MU_EARTH) -> float:
    """Total two-impulse Hohmann cost between circular coplanar orbits [km/s]."""
    at = 0.5 * (r1_km + r2_km)
    v1 = np.sqrt(mu / r1_km)
    v2 = np.sqrt(mu / r2_km)
    vp = np.sqrt(mu * (2.0 / r1_km - 1.0 / at))
    va = np.sqrt(mu * (2.0 / r2_km - 1.0 / at))
    return abs(vp - v1) + abs(v2 - va)
