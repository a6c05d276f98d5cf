"""Runtime Lyapunov certificates for the closed loop.

``V1 = 1/2 s_p' M_c s_p + 1/2 s_r' J_c s_r`` certifies the reaching phase (decay
rate ``lambda_2 = 2 min(k_p, k_r)``); ``V2 = 1/2 e_p'e_p + 1/2 e_r'e_r`` certifies
the sliding phase (rate ``lambda_4 = 2 min(lambda_p, lambda_r)``, valid while
``e_p'e_r >= 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import GainSet, SlidingSurfaces
from .dynamics import BodyParams, RelativeState
from .errors import InvalidArgumentError

V_FLOOR = 1e-12
MONOTONE_RTOL = 1e-6
ENVELOPE_RTOL = 1e-3
EPS_SLIDE = 1e-3


def evaluate_v1(s: SlidingSurfaces, bp_c: BodyParams) -> float:
    return 0.5 * bp_c.mass * float(s.s_p @ s.s_p) + 0.5 * float(s.s_r @ bp_c.inertia @ s.s_r)


def evaluate_v2(rel: RelativeState) -> float:
    return 0.5 * float(rel.e_p @ rel.e_p) + 0.5 * float(rel.e_r @ rel.e_r)


def settling_bound(v0: float, k: float) -> float:
    """Time for ``V0 exp(-k t)`` to reach the unit sublevel set: ``ln(V0)/k``, or 0 if ``V0 <= 1``."""
    if not k > 0:
        raise InvalidArgumentError("decay rate k must be positive")
    if v0 <= 1.0:
        return 0.0
    return float(np.log(v0) / k)


def v1_series(s_p, s_r, bp_c: BodyParams):
    s_p = np.asarray(s_p, float)
    s_r = np.asarray(s_r, float)
    return 0.5 * bp_c.mass * np.einsum("ij,ij->i", s_p, s_p) + 0.5 * np.einsum(
        "ij,jk,ik->i", s_r, bp_c.inertia, s_r
    )


def v2_series(e_p, e_r):
    e_p = np.asarray(e_p, float)
    e_r = np.asarray(e_r, float)
    return 0.5 * np.einsum("ij,ij->i", e_p, e_p) + 0.5 * np.einsum("ij,ij->i", e_r, e_r)


def fit_decay_rate(t, v, floor: float = V_FLOOR) -> float:
    """Least-squares slope of ``-ln V`` against ``t``; samples with ``V <= floor`` are dropped."""
    t = np.asarray(t, float)
    v = np.asarray(v, float)
    mask = v > floor
    if mask.sum() < 2 or np.ptp(t[mask]) == 0:
        return 0.0
    slope = np.polyfit(t[mask], np.log(v[mask]), 1)[0]
    return float(-slope)


def _local_rates(t, v):
    rates = np.zeros_like(v)
    if len(v) < 2:
        return rates
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = np.log(np.maximum(v, V_FLOOR))
        dt = np.diff(t)
        r = -np.diff(lv) / np.where(dt > 0, dt, np.inf)
    rates[1:] = r
    rates[0] = r[0]
    return rates


def derivative_nonuniform(t, y):
    """Three-point derivative on a possibly non-uniform grid (interior samples only).

    Returns ``(idx, dy)`` where ``idx`` indexes the interior samples used.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    ok = (h1 > 1e-9) & (h2 > 1e-9)
    h1 = np.where(ok, h1, 1.0)
    h2 = np.where(ok, h2, 1.0)
    shape = (-1,) + (1,) * (y.ndim - 1)
    a = (-h2 / (h1 * (h1 + h2))).reshape(shape)
    b = ((h2 - h1) / (h1 * h2)).reshape(shape)
    c = (h1 / (h2 * (h1 + h2))).reshape(shape)
    dy = a * y[:-2] + b * y[1:-1] + c * y[2:]
    idx = np.arange(1, len(t) - 1)
    return idx[ok], dy[ok]


def reaching_law_residuals(t, s, k: float, rtol: float = 1e-3):
    """Check ``||s_dot + k s|| <= rtol (1 + ||k s||)`` with numerically differentiated ``s``.

    Returns ``(fraction_satisfied, residual_norms, bounds)`` over interior samples.
    """
    idx, sd = derivative_nonuniform(t, s)
    s = np.asarray(s, float)
    res = np.linalg.norm(sd + k * s[idx], axis=1)
    bound = rtol * (1.0 + np.linalg.norm(k * s[idx], axis=1))
    if len(res) == 0:
        return 1.0, res, bound
    return float(np.mean(res <= bound)), res, bound


@dataclass(frozen=True)
class CertificateSample:
    t: float
    v1: float
    v2: float
    v1_rate: float
    v2_rate: float
    cross_term: float
    phase: str  # "reaching" | "sliding"


@dataclass
class AuditReport:
    t: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v1_rate: np.ndarray
    v2_rate: np.ndarray
    cross_term: np.ndarray
    sliding: np.ndarray
    reaching_violations: list = field(default_factory=list)
    sliding_violations: list = field(default_factory=list)
    envelope_violations: list = field(default_factory=list)
    fitted_v1_rate: float = 0.0
    fitted_v2_rate: float = 0.0
    lambda2: float = 0.0
    lambda4: float = 0.0
    cross_term_nonnegative: bool = True

    @property
    def ok(self) -> bool:
        return not (self.reaching_violations or self.sliding_violations or self.envelope_violations)

    @property
    def v2_rate_claim_applicable(self) -> bool:
        return bool(self.sliding.any()) and self.cross_term_nonnegative

    def sample(self, i: int) -> CertificateSample:
        return CertificateSample(
            float(self.t[i]), float(self.v1[i]), float(self.v2[i]), float(self.v1_rate[i]),
            float(self.v2_rate[i]), float(self.cross_term[i]), "sliding" if self.sliding[i] else "reaching",
        )

    def to_dict(self, max_listed: int = 50) -> dict:
        return {
            "ok": self.ok,
            "n_samples": int(len(self.t)),
            "n_sliding_samples": int(self.sliding.sum()),
            "reaching_violations": self.reaching_violations[:max_listed],
            "n_reaching_violations": len(self.reaching_violations),
            "sliding_violations": self.sliding_violations[:max_listed],
            "n_sliding_violations": len(self.sliding_violations),
            "envelope_violations": self.envelope_violations[:max_listed],
            "n_envelope_violations": len(self.envelope_violations),
            "fitted_v1_rate": self.fitted_v1_rate,
            "fitted_v2_rate": self.fitted_v2_rate,
            "lambda2": self.lambda2,
            "lambda4": self.lambda4,
            "cross_term_nonnegative": self.cross_term_nonnegative,
            "v2_rate_claim_applicable": self.v2_rate_claim_applicable,
            "v1_initial": float(self.v1[0]) if len(self.v1) else 0.0,
            "v1_final": float(self.v1[-1]) if len(self.v1) else 0.0,
            "v2_final": float(self.v2[-1]) if len(self.v2) else 0.0,
        }


def audit_trajectory(log, g: GainSet, bp_c: BodyParams, eps_slide: float = EPS_SLIDE) -> AuditReport:
    """Audit Lyapunov certificates over the closed-loop samples of ``log``.

    ``log`` needs array attributes ``t``, ``s_p``, ``s_r``, ``e_p``, ``e_r`` (tracking
    errors) and optionally a boolean ``closed_loop`` mask.
    """
    t = np.asarray(log.t, float)
    mask = np.asarray(getattr(log, "closed_loop", np.ones(len(t), bool)), bool)
    if len(t) < 2:
        raise InvalidArgumentError("audit needs at least two samples")
    t = t[mask]
    s_p = np.asarray(log.s_p, float)[mask]
    s_r = np.asarray(log.s_r, float)[mask]
    e_p = np.asarray(log.e_p, float)[mask]
    e_r = np.asarray(log.e_r, float)[mask]
    v1 = v1_series(s_p, s_r, bp_c) if len(t) else np.zeros(0)
    v2 = v2_series(e_p, e_r) if len(t) else np.zeros(0)
    cross_term = np.einsum("ij,ij->i", e_p, e_r) if len(t) else np.zeros(0)
    smax = np.maximum(np.linalg.norm(s_p, axis=1), np.linalg.norm(s_r, axis=1)) if len(t) else np.zeros(0)
    sliding = smax < eps_slide
    rep = AuditReport(
        t=t, v1=v1, v2=v2, v1_rate=_local_rates(t, v1), v2_rate=_local_rates(t, v2),
        cross_term=cross_term, sliding=sliding, lambda2=g.reaching_rate, lambda4=g.sliding_rate,
    )
    if len(t) < 2:
        return rep
    for i in np.nonzero(v1[1:] > v1[:-1] * (1 + MONOTONE_RTOL) + V_FLOOR)[0]:
        rep.reaching_violations.append({"index": int(i + 1), "t": float(t[i + 1]),
                                        "v1_prev": float(v1[i]), "v1": float(v1[i + 1])})
    both = sliding[1:] & sliding[:-1]
    for i in np.nonzero(both & (v2[1:] > v2[:-1] * (1 + MONOTONE_RTOL) + V_FLOOR))[0]:
        rep.sliding_violations.append({"index": int(i + 1), "t": float(t[i + 1]),
                                       "v2_prev": float(v2[i]), "v2": float(v2[i + 1])})
    env = v1[0] * np.exp(-g.reaching_rate * (t - t[0])) * (1 + ENVELOPE_RTOL) + V_FLOOR
    for i in np.nonzero(v1 > env)[0]:
        rep.envelope_violations.append({"index": int(i), "t": float(t[i]), "v1": float(v1[i]),
                                        "bound": float(env[i])})
    rep.fitted_v1_rate = fit_decay_rate(t[~sliding], v1[~sliding]) if (~sliding).sum() >= 2 else 0.0
    rep.fitted_v2_rate = fit_decay_rate(t[sliding], v2[sliding]) if sliding.sum() >= 2 else 0.0
    rep.cross_term_nonnegative = bool(np.all(cross_term[sliding] >= 0)) if sliding.any() else True
    return rep
