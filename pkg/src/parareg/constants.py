"""Explicit evaluation of the universal-constant chain.

Starting from the dimension, the ellipticity pair and the geometric
configuration (opening theta, cube radius R), the chain produces the
measure-decay data: the threshold kappa0, the decay exponent epsilon
and the prefactor C for the second-order estimate, plus the bridge
constants (beta, C0, C2, C1) and the third-order decay data.  Pure
arithmetic, bit-for-bit reproducible, and every link is validated to
stay in its admissible range; a broken link raises ``ChainError``
naming it.

Two inputs are not derivable and stay configurable: ``c2`` (the
interior-estimate constant of the gradient bound, default 1) and the
barrier time knob ``tau`` (default 1).  The volume fraction ``c_vol``
defaults to the value implied by the interior-cylinder radius floor and
may be overridden.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .barrier import barrier_params
from .geometry import NU, hat_volume_ratio, pball_volume, unit_ball_volume


class ChainError(ValueError):
    """A constant left its admissible range; carries the link name."""

    def __init__(self, link: str, message: str):
        super().__init__(f"{link}: {message}")
        self.link = link


def default_c_vol(d: int) -> float:
    """Volume fraction |interior cylinder| / |parabolic ball| implied by
    the radius floor r >= sqrt(h/theta)/nu, theta-independent part."""
    return NU ** -(d + 2) * 2.0 ** (d / 2.0) / 16.0 ** (1 + d / 2.0)


def r_bound(d: int, theta: float) -> float:
    """Largest admissible cube radius for the geometric configuration."""
    return 1.0 / ((2.0 + 16.0 * theta) * math.sqrt(d))


@dataclass(frozen=True)
class SideConditions:
    t1_plus_h1: float
    gap_ok: bool
    spread_bound: float
    spread_ok: bool
    drop_bound: float
    drop_ok: bool
    s0_floor: float
    s0_ok: bool

    @property
    def ok(self) -> bool:
        return self.gap_ok and self.spread_ok and self.drop_ok and self.s0_ok


def side_conditions(d: int, theta: float, R: float, kappa0: float) -> SideConditions:
    """Admissibility inequalities of the contact-point construction,
    evaluated at the worst anchor time T0 = -1/4.

    Checks: the upper ball stays below the zero level (T1 + H1 < 0);
    the vertex spread dR^2/theta stays under 1/(4 theta (1+8 theta)^2);
    the vertical drop 2/kappa0 + dR^2/(2 theta) stays under 1/6; and
    the touching time stays above -1.
    """
    t0 = -0.25
    t1_plus_h1 = t0 + (0.5 + 4.0 * theta) * d * R * R
    spread = d * R * R / theta
    spread_bound = 1.0 / (4.0 * theta * (1.0 + 8.0 * theta) ** 2)
    drop = 2.0 / kappa0 + 0.5 * spread
    s0_floor = -0.5 - 1.0 / 6.0
    return SideConditions(
        t1_plus_h1=t1_plus_h1,
        gap_ok=t1_plus_h1 < 0.0,
        spread_bound=spread_bound,
        spread_ok=spread <= spread_bound * (1 + 1e-12),
        drop_bound=drop,
        drop_ok=drop <= 1.0 / 6.0 + 1e-12,
        s0_floor=s0_floor,
        s0_ok=s0_floor > -1.0,
    )


@dataclass(frozen=True)
class ConstantChain:
    # inputs
    d: int
    lam: float
    Lam: float
    theta: float
    R: float
    c2: float
    c_vol: float
    g_norm: float
    tau: float
    # geometry
    nu: float
    eta: float
    alpha: float
    delta: float
    H_cube: float
    H0: float
    H1: float
    H2: float
    xi: float
    # barrier
    barrier_a: float
    barrier_b: float
    barrier_c: float
    beta_barrier: float
    log_beta_barrier: float
    # iteration
    gamma: float
    log_gamma: float
    M: float
    log_M: float
    sigma: float
    # second-order decay
    kappa0: float
    epsilon: float
    c_w2: float
    # third-order bridge and decay
    beta_p41: float
    C0: float
    C2: float
    C1: float
    epsilon_w3: float
    c_w3: float

    def to_dict(self) -> dict:
        return asdict(self)

    def entries(self) -> list[tuple[str, float, str]]:
        """(name, value, formula) rows for reporting."""
        return [
            ("nu", self.nu, "4/(sqrt(2)-1)"),
            ("eta", self.eta, "4^-(1+d/2) (sqrt(2)+1)^-d"),
            ("alpha", self.alpha, "min{1, theta/(1+sqrt(2))^2}"),
            ("delta", self.delta, "alpha/(16 nu^2 theta)"),
            ("H_cube", self.H_cube, "(1+5 theta) d R^2"),
            ("H0", self.H0, "(3/2+9 theta) d R^2"),
            ("H1", self.H1, "d R^2/2"),
            ("H2", self.H2, "d R^2/8"),
            ("xi", self.xi, "(2R)^d H_cube / |pball(theta, H0)|"),
            ("barrier_a", self.barrier_a, "max{(1+d Lam theta)/(2 lam), theta}"),
            ("barrier_b", self.barrier_b,
             "max{(2 d Lam a + 1)/(1 - e^(1/2 - a/theta)), (4 lam a - 1) e^(a/theta - 1/2)}"),
            ("barrier_c", self.barrier_c, "2 (1+tau)^(b+1) e^(a/theta)"),
            ("beta_barrier", self.beta_barrier,
             "2 ((1+tau)^(b+1)/tau^b)(e^(a/theta)-1)"),
            ("log_beta_barrier", self.log_beta_barrier,
             "ln 2 + (b+1) ln(1+tau) - b ln tau + ln(e^(a/theta)-1)"),
            ("gamma", self.gamma, "17 (d Lam + 3) beta theta nu^2"),
            ("log_gamma", self.log_gamma,
             "ln(17 (d Lam + 3) theta nu^2) + log_beta_barrier"),
            ("M", self.M, "gamma + 1"),
            ("log_M", self.log_M, "ln(gamma + 1)"),
            ("sigma", self.sigma,
             "2^-(d+1) lam^d / (1 + 1/(gamma+1) + Lam d)^(d+1) * (c_vol/theta)"),
            ("kappa0", self.kappa0, "max{24, 320/(d R^2)}"),
            ("epsilon", self.epsilon, "-ln(1 - sigma eta)/ln M"),
            ("c_w2", self.c_w2, "|Q_1| / (xi (1 - sigma eta))"),
            ("beta_p41", self.beta_p41, "max{1, 2 Lam (d+1)}"),
            ("C0", self.C0, "768 (c2 (1 + |g|) + 3)"),
            ("C2", self.C2, "192 (1 + beta_p41)(c2 + 3)"),
            ("C1", self.C1, "C2 + 7/6"),
            ("epsilon_w3", self.epsilon_w3, "epsilon"),
            ("c_w3", self.c_w3, "d c_w2 (C1 (1 + |g|) sqrt(d))^epsilon"),
        ]

    def to_json(self) -> str:
        inputs = {k: getattr(self, k) for k in
                  ("d", "lam", "Lam", "theta", "R", "c2", "c_vol", "g_norm", "tau")}
        rows = {name: {"value": value, "formula": formula}
                for name, value, formula in self.entries()}
        return json.dumps({"inputs": inputs, "constants": rows}, indent=2)

    def w2_bound(self, kappa) -> float:
        """Decay bound C (kappa/kappa0)^-epsilon (valid above kappa0)."""
        return self.c_w2 * (kappa / self.kappa0) ** (-self.epsilon)

    def w3_bound(self, kappa) -> float:
        return self.c_w3 * (kappa / self.kappa0) ** (-self.epsilon_w3)


def compute_constants(d: int, lam: float, Lam: float, theta: float, R: float,
                      c2: float = 1.0, c_vol: float | None = None,
                      g_norm: float = 0.0, tau: float = 1.0) -> ConstantChain:
    """Evaluate the full chain; raises ChainError on any broken link."""
    if d not in (1, 2, 3):
        raise ChainError("d", "dimension must be 1, 2 or 3")
    if not (0 < lam <= Lam):
        raise ChainError("ellipticity", "need 0 < lam <= Lam")
    if not (0.75 <= theta <= 5.0):
        raise ChainError("theta", "theta must lie in [3/4, 5]")
    if not (0 < R < r_bound(d, theta)):
        raise ChainError("R", f"need 0 < R < {r_bound(d, theta):.6g}")
    if c_vol is None:
        c_vol = default_c_vol(d)
    if not (0 < c_vol < 1):
        raise ChainError("c_vol", "volume fraction must lie in (0, 1)")
    if not (c2 > 0 and g_norm >= 0 and tau > 0):
        raise ChainError("inputs", "need c2 > 0, g_norm >= 0, tau > 0")

    nu = NU
    eta = hat_volume_ratio(d)
    if not (0 < eta < 1):
        raise ChainError("eta", "volume ratio left (0, 1)")
    alpha = min(1.0, theta / (1.0 + math.sqrt(2.0)) ** 2)
    delta = alpha / (16.0 * nu * nu * theta)

    bp = barrier_params(d, lam, Lam, theta, tau)
    gamma = 17.0 * (d * Lam + 3.0) * bp.beta * theta * nu * nu
    log_gamma = math.log(17.0 * (d * Lam + 3.0) * theta * nu * nu) + bp.log_beta
    bigM = gamma + 1.0
    # beta overflows float64 for steep combinations (large theta with a
    # wide ellipticity ratio pushes b past ~1000); the chain survives
    # because every later use of gamma is through ln(gamma+1) or
    # 1/(gamma+1), both finite.  1/(inf+1) = 0 needs no special case.
    log_M = math.log1p(gamma) if math.isfinite(gamma) else log_gamma
    sigma = (2.0 ** -(d + 1) * lam**d
             / (1.0 + 1.0 / (gamma + 1.0) + Lam * d) ** (d + 1)) * (c_vol / theta)
    if not (0 < sigma * eta < 1):
        raise ChainError("sigma", "sigma eta left (0, 1)")

    kappa0 = max(24.0, 320.0 / (d * R * R))
    # log1p: sigma eta is ~1e-7 and forming 1 - sigma eta directly would
    # throw away half the digits of the exponent
    epsilon = -math.log1p(-sigma * eta) / log_M
    if not (0 < epsilon < 1):
        raise ChainError("epsilon", f"exponent {epsilon} left (0, 1)")

    H_cube = (1.0 + 5.0 * theta) * d * R * R
    H0 = (1.5 + 9.0 * theta) * d * R * R
    H1 = 0.5 * d * R * R
    H2 = d * R * R / 8.0
    xi = (2.0 * R) ** d * H_cube / pball_volume(d, theta, H0)
    if not (0 < xi < 1):
        raise ChainError("xi", "cube-to-ball fraction left (0, 1)")
    sides = side_conditions(d, theta, R, kappa0)
    if not sides.ok:
        raise ChainError("side_conditions", f"configuration inadmissible: {sides}")
    c_w2 = unit_ball_volume(d) / (xi * (1.0 - sigma * eta))

    beta_p41 = max(1.0, 2.0 * Lam * (d + 1))
    C0 = 768.0 * (c2 * (1.0 + g_norm) + 3.0)
    C2 = 192.0 * (1.0 + beta_p41) * (c2 + 3.0)
    C1 = C2 + 7.0 / 6.0
    c_w3 = d * c_w2 * (C1 * (1.0 + g_norm) * math.sqrt(d)) ** epsilon

    chain = ConstantChain(
        d=d, lam=lam, Lam=Lam, theta=theta, R=R, c2=c2, c_vol=c_vol,
        g_norm=g_norm, tau=tau, nu=nu, eta=eta, alpha=alpha, delta=delta,
        H_cube=H_cube, H0=H0, H1=H1, H2=H2, xi=xi,
        barrier_a=bp.a, barrier_b=bp.b, barrier_c=bp.c, beta_barrier=bp.beta,
        log_beta_barrier=bp.log_beta, gamma=gamma, log_gamma=log_gamma,
        M=bigM, log_M=log_M, sigma=sigma, kappa0=kappa0, epsilon=epsilon,
        c_w2=c_w2, beta_p41=beta_p41, C0=C0, C2=C2, C1=C1,
        epsilon_w3=epsilon, c_w3=c_w3,
    )
    # barrier_c, beta_barrier, gamma and M are the four links whose
    # linear value can overflow; each is backed by a finite log above,
    # so +inf is an acceptable (still positive) emitted value for them.
    may_overflow = {"barrier_c", "beta_barrier", "gamma", "M"}
    log_entries = {"log_beta_barrier", "log_gamma", "log_M"}
    for name, value, _ in chain.entries():
        if name in log_entries:
            if not math.isfinite(value):
                raise ChainError(name, f"log value {value} is not finite")
        elif not (value > 0 and (math.isfinite(value) or name in may_overflow)):
            raise ChainError(name, f"value {value} is not finite positive")
    return chain


def dyadic_kappas(kappa0: float, count: int = 11) -> list[float]:
    """kappa0 * 2^k for k = 0..count-1."""
    return [kappa0 * 2.0**k for k in range(count)]
