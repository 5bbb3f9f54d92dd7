"""Explicit bump function on a parabolic ball and its certification.

The function ``phi = c (t+tau)^{-b} (e^{-a rho} - e^{-a/theta})`` with
``rho = |x|^2/(t+tau)`` lives on the upward parabolic ball
``G_{theta,1+tau}(0,-tau)``.  For the right parameter choice it is a
strict supersolution above the zero slice, vanishes on the lateral
boundary, is positive inside, and is bounded by ``beta`` on the zero
slice.  ``verify_barrier`` certifies all four numerically with
quasi-uniform sampling in the ``(rho, t)`` coordinates, concentrated
near the two regime boundaries ``rho = 1/(2a)`` and ``rho = 1/theta``
where the defining case split happens.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import Orientation, ParabolicBall, SpaceTimePoint
from .operators import EllipticityPair


@dataclass(frozen=True)
class BarrierParams:
    """Parameters of the bump function.

    ``log_c`` and ``log_beta`` are always finite and are what the
    verification works with; ``c`` and ``beta`` themselves overflow to
    inf for extreme ellipticity/opening combinations (``b`` grows like
    ``a e^{a/theta}`` and the amplitude like ``2^b``), which is a fact
    about the function, not a defect of the check.
    """

    d: int
    lam: float
    Lam: float
    theta: float
    tau: float
    a: float
    b: float
    c: float
    beta: float
    rho0: float
    log_c: float
    log_beta: float

    @property
    def pair(self) -> EllipticityPair:
        return EllipticityPair(self.lam, self.Lam)

    def domain(self) -> ParabolicBall:
        return ParabolicBall(SpaceTimePoint(np.zeros(self.d), -self.tau),
                             self.theta, 1.0 + self.tau, Orientation.UPWARD)

    def to_dict(self) -> dict:
        return asdict(self)


def _exp_or_inf(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _finish_params(d, lam, Lam, theta, tau, a, b, rho0) -> BarrierParams:
    log_c = math.log(2.0) + (b + 1.0) * math.log1p(tau) + a / theta
    log_beta = (math.log(2.0) + (b + 1.0) * math.log1p(tau)
                - b * math.log(tau) + math.log(math.expm1(a / theta)))
    if not all(v > 0 and math.isfinite(v) for v in (a, b)):
        raise AssertionError("parameter chain left the positive range")
    if not (math.isfinite(log_c) and math.isfinite(log_beta)):
        raise AssertionError("log amplitudes must be finite")
    return BarrierParams(d, lam, Lam, theta, tau, a, b,
                         _exp_or_inf(log_c), _exp_or_inf(log_beta), rho0,
                         log_c, log_beta)


def barrier_params(d: int, lam: float, Lam: float, theta: float,
                   tau: float) -> BarrierParams:
    """Parameter chain a, b, c, beta for the bump function.

    ``a = max{(1+d Lam theta)/(2 lam), theta}``, ``b`` the larger of the
    two drift floors, ``c`` the height normalizer, ``beta`` the zero-slice
    bound.  The radial split point ``rho0`` must land below ``1/(2a)``;
    this is asserted, as is positivity of the ``b`` denominator.
    """
    if not (0 < lam <= Lam):
        raise ValueError("need 0 < lam <= Lam")
    if theta < 0.75:
        raise ValueError("theta must be at least 3/4")
    if not (tau > 0):
        raise ValueError("tau must be positive")
    a = max((1.0 + d * Lam * theta) / (2.0 * lam), theta)
    den = 1.0 - math.exp(0.5 - a / theta)
    if den <= 0:
        raise ValueError("drift denominator is not positive")
    b = max((2.0 * d * Lam * a + 1.0) / den,
            (4.0 * lam * a - 1.0) / math.exp(0.5 - a / theta))
    rho0 = math.log((4.0 * a * lam - 1.0) / b) / a + 1.0 / theta
    if not (rho0 < 1.0 / (2.0 * a) + 1e-12):
        raise AssertionError("radial split point exceeds 1/(2a)")
    return _finish_params(d, lam, Lam, theta, tau, a, b, rho0)


def barrier_eval(p: BarrierParams, x, t: float):
    """phi, its time derivative, and the Hessian eigenvalues at (x, t).

    Eigenvalues: ``2 a psi (2 a rho - 1)`` once along the radius and
    ``-2 a psi`` on the (d-1) tangential directions (all equal at x=0).
    Values beyond float range come back as inf with the correct sign.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != p.d:
        raise ValueError("point dimension mismatch")
    if not p.domain().contains(SpaceTimePoint(x, t), tol=1e-12) or t + p.tau <= 0:
        raise ValueError("point outside the parabolic ball")
    s = t + p.tau
    rho = float(x @ x) / s
    amp = _exp_or_inf(p.log_c - p.b * math.log(s))
    psi = _exp_or_inf(p.log_c - (p.b + 1.0) * math.log(s) - p.a * rho)
    phi = amp * (math.exp(-p.a * rho) - math.exp(-p.a / p.theta))
    dphi_dt = psi * (-(1.0 - math.exp(p.a * (rho - 1.0 / p.theta))) * p.b + p.a * rho)
    radial = 2.0 * p.a * psi * (2.0 * p.a * rho - 1.0)
    eigs = np.full(p.d, -2.0 * p.a * psi)
    eigs[0] = radial
    return phi, dphi_dt, np.sort(eigs)


def _rho_t_samples(p: BarrierParams, n: int, rng, t_low: float, t_high: float,
                   rho_high: float | None = None):
    """Quasi-uniform (rho, t) pairs with extra mass near the case-split
    radii; returns rho, t and a matching random spatial direction."""
    rmax = 1.0 / p.theta if rho_high is None else rho_high
    base = rng.uniform(0.0, rmax, size=n)
    focus = np.concatenate([
        np.clip(1.0 / (2.0 * p.a) + rng.normal(0, 0.02 * rmax, n // 4), 0, rmax),
        np.clip(rmax - np.abs(rng.normal(0, 0.02 * rmax, n // 4)), 0, rmax),
        np.clip(p.rho0 + rng.normal(0, 0.02 * rmax, n // 4), 0, rmax),
    ])
    rhos = np.concatenate([base, focus])
    ts = rng.uniform(t_low, t_high, size=rhos.size)
    dirs = rng.normal(size=(rhos.size, p.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return rhos, ts, dirs


@dataclass
class BarrierReport:
    """``worst_drift`` is the absolute drift value; ``worst_lateral``
    and ``min_inside`` are relative to the local amplitude c s^-b, and
    ``slice_range`` is in fractions of beta, so the numbers stay
    meaningful for parameter sets whose amplitude exceeds float range."""

    params: BarrierParams
    ok: bool
    supersolution_ok: bool
    lateral_ok: bool
    positive_ok: bool
    slice_ok: bool
    worst_drift: float
    worst_lateral: float
    min_inside: float
    slice_range: tuple
    witness: tuple | None
    samples: int

    def to_json(self) -> str:
        data = asdict(self)
        data["params"] = self.params.to_dict()
        return json.dumps(data, indent=2, default=float)


def _scale_free(p: BarrierParams, rho: np.ndarray, s: np.ndarray):
    """Vectorized overflow-safe pieces of the four properties.

    Everything is factored through psi = c s^{-(b+1)} e^{-a rho} > 0:
    ``log_psi`` is its (always finite) logarithm, ``rel`` is
    phi / (c s^-b), and ``R`` is drift / psi.  The Hessian is diagonal
    in the radial frame, so the extremal curvature value needs no
    eigensolve: each eigenvalue mu contributes -lam mu when positive
    and -Lam mu when negative.
    """
    log_psi = p.log_c - (p.b + 1.0) * np.log(s) - p.a * rho
    rel = np.exp(-p.a * rho) - math.exp(-p.a / p.theta)
    radial = 2.0 * p.a * (2.0 * p.a * rho - 1.0)
    tang = -2.0 * p.a
    pplus = (np.where(radial > 0.0, -p.lam * radial, -p.Lam * radial)
             + (p.d - 1) * max(-p.lam * tang, -p.Lam * tang))
    R = p.b * np.expm1(p.a * (rho - 1.0 / p.theta)) + p.a * rho + pplus
    return log_psi, rel, R


def verify_barrier(p: BarrierParams, samples: int = 2000,
                   rng=None) -> BarrierReport:
    """Numerical certificate of the four bump-function properties.

    (i) drift + extremal curvature at most -1 strictly above the zero
    slice, (ii) zero on the lateral boundary, (iii) positive inside,
    (iv) between 0 and beta on the zero slice.  Any violated sample is
    reported as a witness.
    """
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    rng = np.random.default_rng(0) if rng is None else rng
    witness = None

    # (i) on {t > 0}: drift = psi R, so drift <= -1 + 1e-8 amounts to
    # R < 0 together with log psi + log(-R) >= log(1 - 1e-8)
    rhos, ts, dirs = _rho_t_samples(p, samples, rng, t_low=1e-9, t_high=1.0)
    keep = p.theta * rhos <= 1.0
    rhos, ts, dirs = rhos[keep], ts[keep], dirs[keep]
    log_psi, _, R = _scale_free(p, rhos, ts + p.tau)
    if np.any(R >= 0.0):
        k = int(np.argmax(R))
        worst_drift = (_exp_or_inf(float(log_psi[k] + np.log(R[k])))
                       if R[k] > 0 else 0.0)
        supersolution_ok = False
    else:
        log_drift = log_psi + np.log(-R)
        k = int(np.argmin(log_drift))
        worst_drift = -_exp_or_inf(float(log_drift[k]))
        supersolution_ok = float(log_drift[k]) >= math.log1p(-1e-8)
    if not supersolution_ok:
        x = dirs[k] * math.sqrt(rhos[k] * (ts[k] + p.tau))
        witness = (tuple(x), float(ts[k]), worst_drift)

    # (ii) lateral boundary rho = 1/theta, via reconstructed coordinates
    # (x is materialized so rho carries the rounding a caller would see);
    # measured against the local amplitude c s^-b, which blows up toward
    # the vertex and would turn ulp-level rho rounding into large
    # absolute values
    _, ts2, dirs2 = _rho_t_samples(p, samples // 2, rng, t_low=-p.tau + 1e-9, t_high=1.0)
    s2 = ts2 + p.tau
    xs2 = dirs2 * np.sqrt(s2 / p.theta)[:, None]
    rho2 = np.einsum("ij,ij->i", xs2, xs2) / s2
    _, rel2, _ = _scale_free(p, rho2, s2)
    worst_lateral = float(np.abs(rel2).max())
    lateral_ok = worst_lateral <= 1e-12

    # (iii) strictly inside (phi > 0 iff its scale-free factor is)
    rhos3, ts3, dirs3 = _rho_t_samples(p, samples // 2, rng,
                                       t_low=-p.tau + 1e-6, t_high=1.0,
                                       rho_high=(1.0 - 1e-9) / p.theta)
    rhos3 = np.minimum(rhos3, (1.0 - 1e-9) / p.theta)
    _, rel3, _ = _scale_free(p, rhos3, ts3 + p.tau)
    j = int(np.argmin(rel3))
    min_inside = float(rel3[j])
    positive_ok = min_inside > 0.0
    if not positive_ok and witness is None:
        x = dirs3[j] * math.sqrt(rhos3[j] * (ts3[j] + p.tau))
        witness = (tuple(x), float(ts3[j]), min_inside)

    # (iv) zero slice: phi(x, 0) / beta = expm1(a (1/theta - rho)) /
    # expm1(a / theta), exactly 1 at the rho = 0 probe
    rhos4, _, _ = _rho_t_samples(p, samples // 2, rng, t_low=0.0, t_high=0.0)
    rhos4 = np.append(rhos4[p.theta * rhos4 <= 1.0], [0.0, 1.0 / p.theta])
    frac = np.expm1(p.a * (1.0 / p.theta - rhos4)) / math.expm1(p.a / p.theta)
    lo_s, hi_s = float(frac.min()), float(frac.max())
    slice_ok = lo_s >= 0.0 and hi_s <= 1.0 + 1e-12

    ok = supersolution_ok and lateral_ok and positive_ok and slice_ok
    return BarrierReport(params=p, ok=ok, supersolution_ok=supersolution_ok,
                         lateral_ok=lateral_ok, positive_ok=positive_ok,
                         slice_ok=slice_ok, worst_drift=float(worst_drift),
                         worst_lateral=float(worst_lateral),
                         min_inside=float(min_inside),
                         slice_range=(float(lo_s), float(hi_s)),
                         witness=witness, samples=samples)


def sabotaged(p: BarrierParams, b_factor: float = 0.1) -> BarrierParams:
    """Params with the drift coefficient cut, c and beta re-derived;
    breaks the supersolution property (regression guard)."""
    return _finish_params(p.d, p.lam, p.Lam, p.theta, p.tau, p.a,
                          p.b * b_factor, p.rho0)


def rescaled_barrier_check(p: BarrierParams, scale_r: float, height: float,
                           samples: int = 1000, rng=None) -> bool:
    """Form-invariance under parabolic scaling: w(x,t) = h phi(x/R, t/R^2)
    satisfies the same four sign properties with height h beta."""
    rng = np.random.default_rng(1) if rng is None else rng
    base = verify_barrier(p, samples=max(samples, 1000), rng=rng)
    if not base.ok:
        return False
    rhos, ts, _ = _rho_t_samples(p, samples, rng, t_low=1e-9, t_high=1.0)
    keep = p.theta * rhos <= 1.0
    log_psi, rel, R = _scale_free(p, rhos[keep], ts[keep] + p.tau)
    # w at (R x, R^2 t) scales the whole drift by h/R^2 > 0, so the
    # supersolution margin transfers exactly when drift phi <= -1
    if np.any(R >= 0.0) or np.any(log_psi + np.log(-R) < math.log1p(-1e-8)):
        return False
    return not np.any(height * rel < 0.0)
