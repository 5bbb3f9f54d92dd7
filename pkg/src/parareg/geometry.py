"""Space-time geometry: cylinders, one-sided parabolic balls, covers.

The parabolic cylinder ``Q_rho(x, t)`` is the open ball ``B_rho(x)`` times
the half-open window ``(t - rho^2, t]``.  An upward parabolic ball with
vertex ``(x, t)``, opening ``theta`` and height ``h`` is the closed set
``{(y, s): theta |y - x|^2 <= s - t <= h}``; the downward ball mirrors the
time inequality.  Everything here is dimension-generic for d in {1, 2, 3}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# admissible-radius constant of the interior-cylinder construction
NU = 4.0 / (math.sqrt(2.0) - 1.0)
# opening shrink factor of the hat expansion
HAT_SHRINK = (math.sqrt(2.0) + 1.0) ** -2


def unit_ball_volume(d: int) -> float:
    """Lebesgue volume of the unit ball in R^d."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _as_coords(x, d=None):
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1:
        raise ValueError("spatial coordinate must be a flat vector")
    if d is not None and arr.shape[0] != d:
        raise ValueError(f"expected dimension {d}, got {arr.shape[0]}")
    if not (1 <= arr.shape[0] <= 3):
        raise ValueError("supported spatial dimensions are 1, 2, 3")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    return arr


@dataclass(frozen=True)
class SpaceTimePoint:
    """A point (x, t) with x in R^d, d in {1, 2, 3}."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_coords(self.x))
        if not np.isfinite(self.t):
            raise ValueError("time must be finite")
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return self.x.shape[0]


class Orientation(str, Enum):
    UPWARD = "upward"
    DOWNWARD = "downward"


@dataclass(frozen=True)
class Cylinder:
    """Open-ball x half-open-time parabolic cylinder Q_rho(x, t)."""

    center: SpaceTimePoint
    radius: float

    def __post_init__(self):
        if not (self.radius > 0.0 and np.isfinite(self.radius)):
            raise ValueError("radius must be positive and finite")

    @property
    def d(self) -> int:
        return self.center.d

    @property
    def bottom_time(self) -> float:
        return self.center.t - self.radius**2

    def volume(self) -> float:
        return unit_ball_volume(self.d) * self.radius ** (self.d + 2)

    def contains(self, p: SpaceTimePoint, closed: bool = False, tol: float = 0.0) -> bool:
        dx = float(np.linalg.norm(p.x - self.center.x))
        if closed:
            sp = dx <= self.radius + tol
            tm = self.bottom_time - tol <= p.t <= self.center.t + tol
        else:
            sp = dx < self.radius + tol
            tm = self.bottom_time - tol < p.t <= self.center.t + tol
        return bool(sp and tm)


@dataclass(frozen=True)
class ParabolicBall:
    """One-sided parabolic ball (closed), upward or downward in time."""

    vertex: SpaceTimePoint
    opening: float
    height: float
    orientation: Orientation = Orientation.UPWARD

    def __post_init__(self):
        if not (self.opening > 0.0 and np.isfinite(self.opening)):
            raise ValueError("opening must be positive and finite")
        if not (self.height >= 0.0 and np.isfinite(self.height)):
            raise ValueError("height must be nonnegative and finite")

    @property
    def d(self) -> int:
        return self.vertex.d

    def time_interval(self) -> tuple[float, float]:
        t = self.vertex.t
        if self.orientation is Orientation.UPWARD:
            return (t, t + self.height)
        return (t - self.height, t)

    def contains(self, p: SpaceTimePoint, tol: float = 0.0) -> bool:
        if self.orientation is Orientation.UPWARD:
            lag = p.t - self.vertex.t
        else:
            lag = self.vertex.t - p.t
        sq = float(np.sum((p.x - self.vertex.x) ** 2))
        return bool(self.opening * sq <= lag + tol and lag <= self.height + tol)

    def volume(self) -> float:
        return pball_volume(self.d, self.opening, self.height)

    def slice_radius(self, s: float) -> float:
        """Radius of the spatial slice at time s (0 outside the ball)."""
        if self.orientation is Orientation.UPWARD:
            lag = s - self.vertex.t
        else:
            lag = self.vertex.t - s
        if lag < 0.0 or lag > self.height:
            return 0.0
        return math.sqrt(lag / self.opening)


def pball_volume(d: int, theta: float, h: float) -> float:
    """Volume of a parabolic ball: integral of slice-ball volumes over height."""
    if theta <= 0 or h < 0:
        raise ValueError("need opening > 0 and height >= 0")
    return 2.0 * unit_ball_volume(d) / (d + 2) * h ** (1 + d / 2.0) * theta ** (-d / 2.0)


def hat_ball(g: ParabolicBall) -> ParabolicBall:
    """Enlarged ball used for covering: opening shrunk by (sqrt(2)+1)^-2,
    height quadrupled, vertex dropped by 3h.  Contains the input ball."""
    if g.orientation is not Orientation.UPWARD:
        raise ValueError("hat expansion is defined for upward balls")
    v = g.vertex
    return ParabolicBall(
        SpaceTimePoint(v.x, v.t - 3.0 * g.height),
        g.opening * HAT_SHRINK,
        4.0 * g.height,
        Orientation.UPWARD,
    )


def hat_volume_ratio(d: int) -> float:
    """|G| / |hat(G)|, independent of opening and height."""
    return 4.0 ** (-(1 + d / 2.0)) * (math.sqrt(2.0) + 1.0) ** (-d)


def eta0(d: int, theta: float) -> float:
    """Guaranteed cylinder-to-ball volume fraction of interior_cylinder."""
    wd = unit_ball_volume(d)
    return (d + 2) / (2 ** (d + 3) * wd) * ((math.sqrt(2.0) - 1.0) / 4.0) ** (d + 2) / theta


def parabolic_boundary_distance(q: Cylinder, p: SpaceTimePoint) -> float:
    """Distance from p to the bottom face union lateral wall of q,
    in the parabolic metric max(|dx|, sqrt(|dt|))."""
    if not q.contains(p, closed=True, tol=1e-12):
        raise ValueError("point lies outside the closed cylinder")
    to_bottom = math.sqrt(max(p.t - q.bottom_time, 0.0))
    to_wall = q.radius - float(np.linalg.norm(p.x - q.center.x))
    return max(min(to_bottom, to_wall), 0.0)


# ---------------------------------------------------------------------------
# interior cylinder of a downward ball
# ---------------------------------------------------------------------------


def interior_cylinder(
    x,
    t: float,
    h: float,
    theta: float,
    outer: ParabolicBall,
    zeta_step: float = 1e-3,
) -> Cylinder:
    """Cylinder wedged between an upward ball at (x, t) and ``outer``.

    Given (x, t) in the downward ball ``outer`` and a height
    ``0 < h <= t0 - t``, returns ``Q_r(x2, t2)`` with ``t2 = t + h/2``
    whose closure lies in ``G_{theta,h}(x, t)``, in ``outer``, and in the
    slab ``t + h/4 <= s <= t + h/2``.  The center is searched on the
    segment from x to the outer vertex (step ``zeta_step`` in the segment
    parameter) and the largest admissible radius is taken; the result is
    guaranteed to satisfy ``r >= sqrt(h/theta) / nu`` with
    ``nu = 4/(sqrt(2)-1)``.

    Raises
    ------
    ValueError
        If (x, t) is not in ``outer``, or h is degenerate (h > t0 - t).
    """
    x = _as_coords(x)
    if outer.orientation is not Orientation.DOWNWARD:
        raise ValueError("outer ball must be downward")
    pt = SpaceTimePoint(x, t)
    if not outer.contains(pt, tol=1e-12):
        raise ValueError("(x, t) must lie in the outer ball")
    x0, t0 = outer.vertex.x, outer.vertex.t
    if not (0.0 < h <= t0 - t + 1e-12):
        raise ValueError("height must satisfy 0 < h <= t0 - t")
    if theta <= 0:
        raise ValueError("opening must be positive")

    dist = float(np.linalg.norm(x0 - x))
    cap_time = math.sqrt(h) / 2.0
    cap_inner = math.sqrt(h / (4.0 * theta))
    cap_outer_sq = (t0 - t - h / 2.0) / theta
    cap_outer = math.sqrt(max(cap_outer_sq, 0.0))

    zetas = np.arange(0.0, 1.0 + zeta_step / 2, zeta_step)
    if dist > 0.0:
        # exact crossing of the two linear budgets; the scan grid alone can
        # miss the optimum by O(step * dist), which matters in tight cases
        zc = (cap_inner - cap_outer + dist) / (2.0 * dist)
        zetas = np.append(zetas, np.clip(zc, 0.0, 1.0))
    r_all = np.minimum(
        cap_time,
        np.minimum(cap_inner - zetas * dist, cap_outer - (1.0 - zetas) * dist),
    )
    k = int(np.argmax(r_all))  # first maximizer: deterministic
    r = float(r_all[k])
    r_floor = math.sqrt(h / theta) / NU
    if r < r_floor - 1e-12:
        raise AssertionError(
            f"admissible radius {r:.6g} fell below the guaranteed floor {r_floor:.6g}"
        )
    x2 = x + zetas[k] * (x0 - x)
    return Cylinder(SpaceTimePoint(x2, t + h / 2.0), r)


def _sample_ball(rng, d, n):
    """n uniform points in the unit d-ball."""
    g = rng.standard_normal((n, d))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    radii = rng.random(n) ** (1.0 / d)
    return g * radii[:, None]


def sample_pball(rng, ball: ParabolicBall, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n uniform samples (x array, t array) from a parabolic ball."""
    d = ball.d
    # slice volume grows like lag^(d/2): sample the lag accordingly
    lag = ball.height * rng.random(n) ** (1.0 / (1.0 + d / 2.0))
    radii = np.sqrt(lag / ball.opening)
    pts = _sample_ball(rng, d, n) * radii[:, None] + ball.vertex.x[None, :]
    if ball.orientation is Orientation.UPWARD:
        ts = ball.vertex.t + lag
    else:
        ts = ball.vertex.t - lag
    return pts, ts


@dataclass
class CylinderPropertyReport:
    p1_ok: bool
    p1_violations: int
    p2_ok: bool
    p2_ratio: float
    p2_floor: float
    p3_ok: bool
    p3_violations: int
    p3_worst_overshoot: float
    p3_witness: tuple | None
    samples: int


def cylinder_properties_report(
    cyl: Cylinder,
    x,
    t: float,
    h: float,
    theta: float,
    outer: ParabolicBall,
    n_samples: int = 10_000,
    rng=None,
    p3_fraction: float = 0.25,
    corner_probes: bool = True,
    tol: float = 1e-9,
) -> CylinderPropertyReport:
    """Sampled validation of the three interior-cylinder properties.

    P1: the closed cylinder lies in the upward ball at (x, t), in the
    outer downward ball, and in the slab [t + h/4, t + h/2].
    P2: |Q_r| / |G_{theta,h}| >= eta0(d, theta)  (exact volume formulas).
    P3: nested-ball property -- for (z, tz) in the hypothesis cylinder of
    radius ``p3_fraction * r`` and (y, s) in the downward half-opening
    ball of height r^2/16 below (z, tz - r^2/16), the upward half-opening
    ball of height tz - s at (y, s) stays inside Q_r.  ``corner_probes``
    adds deterministic extremal configurations so the verdict does not
    depend on sampling luck.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    x = _as_coords(x)
    d = cyl.d
    x2, t2, r = cyl.center.x, cyl.center.t, cyl.radius
    up = ParabolicBall(SpaceTimePoint(x, t), theta, h, Orientation.UPWARD)

    # --- P1 ------------------------------------------------------------
    pts = _sample_ball(rng, d, n_samples) * r + x2[None, :]
    ts = t2 - r**2 * rng.random(n_samples)
    # deterministic extremes: boundary points at both time ends
    extremes_x = [x2 + r * e for e in np.eye(d)] + [x2 - r * e for e in np.eye(d)] + [x2]
    for ex in extremes_x:
        pts = np.vstack([pts, ex, ex])
        ts = np.concatenate([ts, [t2, t2 - r**2]])
    lag_up = ts - t
    sq_up = np.sum((pts - x[None, :]) ** 2, axis=1)
    in_up = (theta * sq_up <= lag_up + tol) & (lag_up <= h + tol)
    lag_dn = outer.vertex.t - ts
    sq_dn = np.sum((pts - outer.vertex.x[None, :]) ** 2, axis=1)
    in_outer = (outer.opening * sq_dn <= lag_dn + tol) & (lag_dn <= outer.height + tol)
    in_slab = (ts >= t + h / 4.0 - tol) & (ts <= t + h / 2.0 + tol)
    p1_bad = int((~(in_up & in_outer & in_slab)).sum())

    # --- P2 ------------------------------------------------------------
    ratio = cyl.volume() / pball_volume(d, theta, h)
    floor = eta0(d, theta)
    p2_ok = ratio >= floor * (1.0 - 1e-12)

    # --- P3 ------------------------------------------------------------
    rho_hyp = p3_fraction * r
    cap = r**2 / 16.0
    m = n_samples
    z = _sample_ball(rng, d, m) * rho_hyp + x2[None, :]
    tz = t2 - rho_hyp**2 * rng.random(m)
    cdep = cap * rng.random(m) ** (1.0 / (1.0 + d / 2.0))
    y = z + _sample_ball(rng, d, m) * np.sqrt(2.0 * cdep)[:, None]
    s = tz - cap - cdep
    hup = tz - s
    edep = hup * rng.random(m) ** (1.0 / (1.0 + d / 2.0))
    w = y + _sample_ball(rng, d, m) * np.sqrt(2.0 * edep)[:, None]
    wt = s + edep
    if corner_probes:
        eye = np.eye(d)
        for sgn in (1.0, -1.0):
            for e in eye:
                zc = x2 + sgn * rho_hyp * e * (1.0 - 1e-12)
                yc = zc + sgn * math.sqrt(2.0 * cap) * e
                sc = t2 - cap - cap
                wc = yc + sgn * math.sqrt(2.0 * (t2 - sc)) * e
                z = np.vstack([z, zc])
                tz = np.concatenate([tz, [t2]])
                y = np.vstack([y, yc])
                s = np.concatenate([s, [sc]])
                w = np.vstack([w, wc])
                wt = np.concatenate([wt, [t2]])
    over = np.linalg.norm(w - x2[None, :], axis=1) / r
    in_time = (wt > t2 - r**2 - tol) & (wt <= t2 + tol)
    bad = (over > 1.0 + tol) | ~in_time
    p3_bad = int(bad.sum())
    worst = float(over.max())
    witness = None
    if p3_bad:
        k = int(np.argmax(over))
        witness = (z[k].copy(), float(tz[k]), y[k].copy(), float(s[k]), w[k].copy(), float(wt[k]))

    return CylinderPropertyReport(
        p1_ok=(p1_bad == 0),
        p1_violations=p1_bad,
        p2_ok=p2_ok,
        p2_ratio=ratio,
        p2_floor=floor,
        p3_ok=(p3_bad == 0),
        p3_violations=p3_bad,
        p3_worst_overshoot=worst,
        p3_witness=witness,
        samples=n_samples,
    )


# ---------------------------------------------------------------------------
# greedy disjoint subfamily with covering hat expansions
# ---------------------------------------------------------------------------


@dataclass
class CoverSelection:
    selected: list[ParabolicBall]
    hatted: list[ParabolicBall]
    selected_indices: list[int]


def balls_intersect(g1: ParabolicBall, g2: ParabolicBall) -> bool:
    """Exact intersection test for two upward balls (closed sets)."""
    if g1.orientation is not Orientation.UPWARD or g2.orientation is not Orientation.UPWARD:
        raise ValueError("intersection test implemented for upward balls")
    t1, t2 = g1.vertex.t, g2.vertex.t
    s_hi = min(t1 + g1.height, t2 + g2.height)
    s_lo = max(t1, t2)
    if s_hi < s_lo:
        return False
    # slice radii grow with s, so the widest common slice is at s_hi
    r1 = math.sqrt(max(s_hi - t1, 0.0) / g1.opening)
    r2 = math.sqrt(max(s_hi - t2, 0.0) / g2.opening)
    gap = float(np.linalg.norm(g1.vertex.x - g2.vertex.x))
    return gap <= r1 + r2


def vitali_select(balls: list[ParabolicBall]) -> CoverSelection:
    """Greedy disjoint subfamily; hat expansions of the picks cover the union.

    Balls are visited by decreasing height, ties broken lexicographically
    by vertex coordinates then vertex time; a ball is kept iff it meets no
    previously kept ball.  All balls must be upward with a common opening.
    """
    if not balls:
        return CoverSelection([], [], [])
    if any(b.orientation is not Orientation.UPWARD for b in balls):
        raise ValueError("vitali_select expects upward balls")
    op0 = balls[0].opening
    if any(abs(b.opening - op0) > 1e-12 * max(1.0, op0) for b in balls):
        raise ValueError("vitali_select expects a common opening")

    def key(i):
        b = balls[i]
        return (-b.height, tuple(b.vertex.x), b.vertex.t)

    order = sorted(range(len(balls)), key=key)
    kept: list[int] = []
    for i in order:
        if all(not balls_intersect(balls[i], balls[j]) for j in kept):
            kept.append(i)
    sel = [balls[i] for i in kept]
    return CoverSelection(sel, [hat_ball(b) for b in sel], kept)


def covers_points(selection: CoverSelection, balls: list[ParabolicBall],
                  tol: float = 1e-9) -> bool:
    """Exact check of the covering conclusion: the vertex of every input
    ball (the point that spawned it) lies in some hatted pick.  Only the
    vertex set is claimed; the union of the balls themselves need not be
    covered, and for balls meeting near the top of a taller pick it is not.
    """
    return all(
        any(hb.contains(b.vertex, tol=tol) for hb in selection.hatted)
        for b in balls
    )


def hat_contains_ball(g: ParabolicBall, rng=None, n: int = 200,
                      tol: float = 1e-9) -> bool:
    """Sampled check that a ball's own hat contains it."""
    if rng is None:
        rng = np.random.default_rng(0)
    hb = hat_ball(g)
    xs, ts = sample_pball(rng, g, n)
    lag = ts - hb.vertex.t
    sq = np.sum((xs - hb.vertex.x[None, :]) ** 2, axis=1)
    inside = (hb.opening * sq <= lag + tol) & (lag <= hb.height + tol)
    return bool(inside.all())
