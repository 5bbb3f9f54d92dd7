"""Pointwise regularity quantities on grid functions.

The central objects are the one-sided opening fields (smallest curvature
of a space-time paraboloid touching the function from below or above on
the past domain), the normalized cubic error of a quadratic expansion,
contact sets for sliding paraboloids of a fixed opening, the infimal
convolution, the contact vertex map with its measure inequality, and
power-law fits of value-survival tables.

All maxima over the past domain range over ``s <= t`` inclusive.  The
discrete quantities fix the affine data from centered differences; a
brute-force lattice refinement over the affine data is kept as an
oracle.  Tolerances: contact membership ``kappa * dx^2``, cubic
certificates ``10 * dx``; reports record what was used.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .geometry import Cylinder, SpaceTimePoint
from .operators import (EllipticityPair, OperatorSpec, as_sym_matrix,
                        eval_operator, pucci_minus_spec, pucci_plus_spec)
from .solver import Grid, GridFunction, stencil_eval

__all__ = [
    "QuadraticExpansion",
    "Paraboloid",
    "ParaboloidSign",
    "ThetaCertificate",
    "PsiCertificate",
    "ThetaField",
    "PsiField",
    "KappaSetField",
    "theta_lower",
    "theta_upper",
    "theta_field",
    "psi",
    "psi_field",
    "a_kappa_set",
    "a_kappa_membership",
    "kappa_containment",
    "inf_convolution",
    "inf_convolution_brute",
    "vertex_map",
    "abp_check",
    "AbpReport",
    "assemble_expansion",
    "directional_derivative_check",
    "DirectionalReport",
    "survival_and_fit",
    "SurvivalFit",
    "survival_dominated",
    "rescaled_remainder",
    "field_to_csv",
    "mask_to_gridfunction",
]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticExpansion:
    """Affine-plus-quadratic model u(x0)+b(t-t0)+p.(x-x0)+(x-x0).M(x-x0)/2."""

    base: SpaceTimePoint
    value: float
    b: float
    p: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).reshape(-1)
        M = as_sym_matrix(self.M, d=p.shape[0], tol=1e-9)
        if p.shape[0] != self.base.d:
            raise ValueError("slope dimension does not match the base point")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "M", M)

    def __call__(self, xs, ts):
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ts = np.asarray(ts, dtype=np.float64)
        dxs = xs - self.base.x[None, :]
        return (self.value + self.b * (ts - self.base.t) + dxs @ self.p
                + 0.5 * np.einsum("ij,jk,ik->i", dxs, self.M, dxs))


class ParaboloidSign(str, Enum):
    CONCAVE = "concave"
    CONVEX = "convex"


@dataclass(frozen=True)
class Paraboloid:
    """Space-time paraboloid of a fixed opening, concave or convex."""

    vertex: SpaceTimePoint
    opening: float
    sign: ParaboloidSign = ParaboloidSign.CONCAVE

    def __post_init__(self):
        if not (self.opening > 0):
            raise ValueError("opening must be positive")

    def __call__(self, xs, ts):
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ts = np.asarray(ts, dtype=np.float64)
        sq = np.einsum("ij,ij->i", xs - self.vertex.x[None, :], xs - self.vertex.x[None, :])
        val = -0.5 * self.opening * sq + self.opening * (ts - self.vertex.t)
        if self.sign is ParaboloidSign.CONVEX:
            return -val
        return val


@dataclass(frozen=True)
class ThetaCertificate:
    value: float
    p: np.ndarray
    base_index: tuple
    mode: str


@dataclass(frozen=True)
class PsiCertificate:
    value: float
    raw: float
    expansion: QuadraticExpansion
    base_index: tuple
    mode: str


@dataclass
class ThetaField:
    """Opening values over many base nodes of one grid function."""

    grid: Grid
    base_it: np.ndarray
    base_js: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    slopes: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return np.maximum(self.lower, self.upper)

    @property
    def values(self) -> np.ndarray:
        return self.theta

    @property
    def cell_volume(self) -> float:
        return self.grid.dx**self.grid.d * self.grid.dt

    def base_coords(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.coords[self.base_js], self.grid.times[self.base_it]


@dataclass
class PsiField:
    grid: Grid
    base_it: np.ndarray
    base_js: np.ndarray
    values: np.ndarray
    b: np.ndarray
    slopes: np.ndarray
    curvatures: np.ndarray

    @property
    def cell_volume(self) -> float:
        return self.grid.dx**self.grid.d * self.grid.dt

    def base_coords(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.coords[self.base_js], self.grid.times[self.base_it]


@dataclass
class KappaSetField:
    """Contact-set mask with one witness vertex index per member node."""

    grid: Grid
    kappa: float
    tol: float
    vertices: np.ndarray
    mask: np.ndarray
    witness: np.ndarray

    def witness_vertex(self, it: int, js: int) -> np.ndarray:
        w = self.witness[it, js]
        if w < 0:
            raise KeyError("node is not a member")
        return self.vertices[w]

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) * self.grid.dx**self.grid.d * self.grid.dt


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _field_arrays(u: GridFunction):
    vals2 = np.ascontiguousarray(u.flat, dtype=np.float64)
    coords = np.ascontiguousarray(u.grid.coords, dtype=np.float64)
    times = np.ascontiguousarray(u.grid.times, dtype=np.float64)
    return vals2, coords, times


def _domain_masks(u: GridFunction, domain: Cylinder | None):
    g = u.grid
    coords = g.coords
    times = g.times
    if domain is None:
        smask = np.ones(g.ns, dtype=bool)
        it_lo = 0
    else:
        gap = coords - np.asarray(domain.center.x)[None, :]
        smask = np.einsum("ij,ij->i", gap, gap) <= (domain.radius + 1e-12) ** 2
        it_lo = int(np.searchsorted(times, domain.bottom_time - 1e-12))
    return smask, it_lo


def _locate(u: GridFunction, base: SpaceTimePoint) -> tuple[int, int]:
    """Nearest grid node; refuses bases farther than half a cell away."""
    g = u.grid
    it = int(round((base.t - g.times[0]) / g.dt))
    if not (0 <= it < g.nt) or abs(g.times[it] - base.t) > 0.5 * g.dt + 1e-12:
        raise ValueError("base time is off the grid")
    idx = []
    for k in range(g.d):
        i = int(round((base.x[k] - (g.x0[k] - g.rho)) / g.dx))
        if not (0 <= i < g.Nx) or abs(g.axis(k)[i] - base.x[k]) > 0.5 * g.dx + 1e-12:
            raise ValueError("base point is off the grid")
        idx.append(i)
    js = int(np.ravel_multi_index(idx, g.spatial_shape))
    return it, js


def _centered_gradient(u: GridFunction, it: int, js: int) -> np.ndarray:
    g = u.grid
    idx = np.array(np.unravel_index(js, g.spatial_shape))
    if np.any(idx == 0) or np.any(idx == g.Nx - 1):
        raise ValueError("gradient stencil needs an interior base node")
    lvl = u.values[it]
    p = np.empty(g.d)
    for k in range(g.d):
        hi = idx.copy()
        lo = idx.copy()
        hi[k] += 1
        lo[k] -= 1
        p[k] = (lvl[tuple(hi)] - lvl[tuple(lo)]) / (2.0 * g.dx)
    return p


def _hessian_stencil(u: GridFunction, it: int, js: int) -> np.ndarray:
    g = u.grid
    idx = np.array(np.unravel_index(js, g.spatial_shape))
    if np.any(idx == 0) or np.any(idx == g.Nx - 1):
        raise ValueError("Hessian stencil needs an interior base node")
    lvl = u.values[it]
    dx2 = g.dx * g.dx
    M = np.empty((g.d, g.d))
    c = lvl[tuple(idx)]
    for k in range(g.d):
        hi, lo = idx.copy(), idx.copy()
        hi[k] += 1
        lo[k] -= 1
        M[k, k] = (lvl[tuple(hi)] - 2.0 * c + lvl[tuple(lo)]) / dx2
    for k in range(g.d):
        for l in range(k + 1, g.d):
            pp, mm, pm, mp = idx.copy(), idx.copy(), idx.copy(), idx.copy()
            pp[[k, l]] += 1
            mm[[k, l]] -= 1
            pm[k] += 1
            pm[l] -= 1
            mp[k] -= 1
            mp[l] += 1
            M[k, l] = M[l, k] = (lvl[tuple(pp)] + lvl[tuple(mm)]
                                 - lvl[tuple(pm)] - lvl[tuple(mp)]) / (4.0 * dx2)
    return M


def _check_base(u, domain, base):
    if domain is not None and not domain.contains(base, closed=True, tol=1e-9):
        raise ValueError("base point lies outside the domain")


# ---------------------------------------------------------------------------
# opening fields
# ---------------------------------------------------------------------------


def theta_lower(u: GridFunction, domain: Cylinder | None, base: SpaceTimePoint,
                mode: str = "gradient", p: np.ndarray | None = None,
                stride_t: int = 1) -> ThetaCertificate:
    """Smallest opening of a concave paraboloid minorant through the base.

    With the slope fixed (centered gradient unless ``p`` is given) the
    value is ``max(0, sup (u(base)+p.(y-x)-u(y,s)) / (|y-x|^2/2+(t-s)))``
    over past domain nodes.  ``mode="brute"`` additionally minimizes
    over an 11^d slope lattice around the gradient and keeps the smaller
    value.
    """
    _check_base(u, domain, base)
    it, js = _locate(u, base)
    vals2, coords, times = _field_arrays(u)
    smask, it_lo = _domain_masks(u, domain)
    if not smask[js]:
        raise ValueError("base point lies outside the domain")
    p0 = np.asarray(p, dtype=np.float64) if p is not None else _centered_gradient(u, it, js)
    best = _kernels.theta_scan(vals2, coords, times, smask, it_lo, it, js, p0, stride_t)
    best_p = p0
    if mode == "brute":
        span = 2.0 * (1.0 + float(np.abs(p0).max()))
        axes = [p0[k] + np.linspace(-span, span, 11) for k in range(u.grid.d)]
        for cand in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, u.grid.d):
            v = _kernels.theta_scan(vals2, coords, times, smask, it_lo, it, js, cand, stride_t)
            if v < best:
                best, best_p = v, cand
    elif mode != "gradient":
        raise ValueError("mode must be 'gradient' or 'brute'")
    return ThetaCertificate(float(best), np.array(best_p), (it, js), mode)


def theta_upper(u: GridFunction, domain: Cylinder | None, base: SpaceTimePoint,
                mode: str = "gradient", p: np.ndarray | None = None,
                stride_t: int = 1) -> ThetaCertificate:
    """Mirror opening (touching from above): computed on the negated field."""
    neg = GridFunction(u.grid, -u.values)
    q = None if p is None else -np.asarray(p, dtype=np.float64)
    cert = theta_lower(neg, domain, base, mode=mode, p=q, stride_t=stride_t)
    return ThetaCertificate(cert.value, -cert.p, cert.base_index, cert.mode)


def _base_selection(u: GridFunction, bases: Cylinder | None, base_stride: int,
                    time_stride: int):
    g = u.grid
    smask, it_lo = _domain_masks(u, bases)
    inner = g.interior_mask
    keep = smask & inner
    if base_stride > 1:
        shape_idx = np.array(np.unravel_index(np.arange(g.ns), g.spatial_shape))
        for k in range(g.d):
            keep &= (shape_idx[k] % base_stride) == 0
    js_all = np.nonzero(keep)[0]
    if bases is None:
        its = np.arange(1, g.nt, time_stride)
    else:
        top = int(np.searchsorted(g.times, bases.center.t + 1e-12, side="right")) - 1
        its = np.arange(max(it_lo, 1), top + 1, time_stride)
    base_it = np.repeat(its, js_all.size).astype(np.int64)
    base_js = np.tile(js_all, its.size).astype(np.int64)
    return base_it, base_js


def theta_field(u: GridFunction, domain: Cylinder | None = None,
                bases: Cylinder | None = None, base_stride: int = 1,
                time_stride: int = 1, scan_stride: int = 1) -> ThetaField:
    """Both one-sided openings over a lattice of base nodes.

    ``bases`` restricts base points (e.g. the centered half cylinder);
    ``base_stride``/``time_stride`` subsample the base lattice and
    ``scan_stride`` subsamples the past scan, for budget control.
    """
    vals2, coords, times = _field_arrays(u)
    smask, it_lo = _domain_masks(u, domain)
    base_it, base_js = _base_selection(u, bases, base_stride, time_stride)
    g = u.grid
    P = np.empty((base_it.size, g.d))
    grads = [np.gradient(u.values[it].astype(np.float64), g.dx) for it in np.unique(base_it)]
    lookup = {it: i for i, it in enumerate(np.unique(base_it))}
    for row, (it, js) in enumerate(zip(base_it, base_js)):
        gr = grads[lookup[it]]
        if g.d == 1:
            P[row, 0] = gr[np.unravel_index(js, g.spatial_shape)]
        else:
            idx = np.unravel_index(js, g.spatial_shape)
            for k in range(g.d):
                P[row, k] = gr[k][idx]
    lower = _kernels.theta_field(vals2, coords, times, smask, it_lo,
                                 base_it, base_js, P, scan_stride)
    upper = _kernels.theta_field(-vals2, coords, times, smask, it_lo,
                                 base_it, base_js, -P, scan_stride)
    return ThetaField(g, base_it, base_js, lower, upper, P)


# ---------------------------------------------------------------------------
# cubic error of the quadratic expansion
# ---------------------------------------------------------------------------


def psi(u: GridFunction, domain: Cylinder | None, base: SpaceTimePoint,
        mode: str = "stencil", expansion: QuadraticExpansion | None = None,
        stride_t: int = 1) -> PsiCertificate:
    """Normalized worst cubic deviation from a quadratic model at the base.

    The model is built from centered stencils (or taken from
    ``expansion``); the value is ``6 sup |u - Q| / (|y-x|^3 +
    (t-s)^{3/2})`` over past domain nodes.  ``mode="brute"`` refines
    (b, p, M) on a coarse lattice (1d only) and keeps the minimum.
    """
    _check_base(u, domain, base)
    it, js = _locate(u, base)
    if it == 0:
        raise ValueError("base on the parabolic boundary (bottom face)")
    vals2, coords, times = _field_arrays(u)
    smask, it_lo = _domain_masks(u, domain)
    if not smask[js]:
        raise ValueError("base point lies outside the domain")
    g = u.grid
    if expansion is not None:
        b0 = expansion.b
        p0 = expansion.p
        M0 = expansion.M
    else:
        p0 = _centered_gradient(u, it, js)
        M0 = _hessian_stencil(u, it, js)
        b0 = float((u.flat[it, js] - u.flat[it - 1, js]) / g.dt)

    def scan(b, p, M):
        return _kernels.psi_scan(vals2, coords, times, smask, it_lo, it, js,
                                 float(b), np.asarray(p, dtype=np.float64),
                                 as_sym_matrix(M, d=g.d, tol=1e-9), stride_t)

    raw = scan(b0, p0, M0)
    best = (raw, b0, np.array(p0, dtype=np.float64), np.atleast_2d(M0))
    if mode == "brute":
        if g.d != 1:
            raise ValueError("brute mode is 1d only; the lattice blows up with d")
        spans = (1.0 + abs(b0), 1.0 + abs(float(p0[0])), 1.0 + abs(float(M0[0, 0])))
        for bb in b0 + np.linspace(-spans[0], spans[0], 11):
            for pp in p0[0] + np.linspace(-spans[1], spans[1], 11):
                for mm in M0[0, 0] + np.linspace(-spans[2], spans[2], 11):
                    v = scan(bb, [pp], [[mm]])
                    if v < best[0]:
                        best = (v, float(bb), np.array([pp]), np.array([[mm]]))
    elif mode != "stencil":
        raise ValueError("mode must be 'stencil' or 'brute'")
    raw, b1, p1, M1 = best
    exp = QuadraticExpansion(base=SpaceTimePoint(g.coords[js], float(g.times[it])),
                             value=float(u.flat[it, js]), b=float(b1), p=p1, M=M1)
    return PsiCertificate(6.0 * raw, raw, exp, (it, js), mode)


def psi_field(u: GridFunction, domain: Cylinder | None = None,
              bases: Cylinder | None = None, base_stride: int = 1,
              time_stride: int = 1, scan_stride: int = 1) -> PsiField:
    """Stencil-certificate cubic errors over a lattice of base nodes."""
    vals2, coords, times = _field_arrays(u)
    smask, it_lo = _domain_masks(u, domain)
    base_it, base_js = _base_selection(u, bases, base_stride, time_stride)
    g = u.grid
    nb = base_it.size
    B = np.empty(nb)
    P = np.empty((nb, g.d))
    Ms = np.empty((nb, g.d, g.d))
    for row in range(nb):
        it, js = int(base_it[row]), int(base_js[row])
        P[row] = _centered_gradient(u, it, js)
        Ms[row] = _hessian_stencil(u, it, js)
        B[row] = (u.flat[it, js] - u.flat[it - 1, js]) / g.dt
    raw = _kernels.psi_field(vals2, coords, times, smask, it_lo,
                             base_it, base_js, B, P, Ms, scan_stride)
    return PsiField(g, base_it, base_js, 6.0 * raw, B, P, Ms)


# ---------------------------------------------------------------------------
# contact sets for sliding paraboloids
# ---------------------------------------------------------------------------


def _vertex_lattice(grid: Grid, resolution: int, radius: float | None) -> np.ndarray:
    r = grid.rho if radius is None else radius
    axes = [np.linspace(grid.x0[k] - r, grid.x0[k] + r, resolution)
            for k in range(grid.d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def a_kappa_set(u: GridFunction, kappa: float, vertex_grid: int = 9,
                vertex_radius: float | None = None, tol: float | None = None,
                domain: Cylinder | None = None,
                vertices: np.ndarray | None = None) -> KappaSetField:
    """Nodes where some concave paraboloid of the given opening touches.

    For each vertex ``y`` of a spatial lattice, a node (x, t) is marked
    when ``u + kappa (|x-y|^2/2 - t)`` sits within ``tol`` of its
    running-in-time minimum (the vertical shift of the vertex only
    re-zeroes the infimum, so sliding reduces to the running argmin).
    Membership tolerance defaults to ``kappa dx^2``.
    """
    if not (kappa > 0):
        raise ValueError("kappa must be positive")
    g = u.grid
    tol = kappa * g.dx**2 if tol is None else tol
    vals2, coords, times = _field_arrays(u)
    smask, it_lo = _domain_masks(u, domain)
    if it_lo > 0:
        smask = smask.copy()
        vals2 = vals2[it_lo:]
        times = times[it_lo:]
    vs = _vertex_lattice(g, vertex_grid, vertex_radius) if vertices is None \
        else np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    mask = np.zeros((g.nt, g.ns), dtype=bool)
    witness = np.full((g.nt, g.ns), -1, dtype=np.int64)
    for vi in range(vs.shape[0] - 1, -1, -1):
        gap = coords - vs[vi][None, :]
        sqdist = 0.5 * np.einsum("ij,ij->i", gap, gap)
        marks = _kernels.akappa_sweep(vals2, sqdist, times, smask, kappa, tol)
        mask[it_lo:] |= marks
        witness[it_lo:][marks] = vi
    return KappaSetField(g, kappa, tol, vs, mask, witness)


def a_kappa_membership(u: GridFunction, kappa: float, vertex,
                       tol: float | None = None,
                       domain: Cylinder | None = None) -> np.ndarray:
    """Contact mask for one (possibly off-lattice) vertex."""
    field = a_kappa_set(u, kappa, tol=tol, domain=domain,
                        vertices=np.atleast_2d(np.asarray(vertex, dtype=np.float64)))
    return field.mask


def kappa_containment(u: GridFunction, field: KappaSetField,
                      domain: Cylinder | None = None, tol: float = 0.05,
                      max_checks: int = 400, rng=None) -> dict:
    """Check members satisfy theta_lower <= kappa (1 + tol).

    The touching slope ``kappa (y - x)`` from the witness vertex and the
    centered gradient are both valid upper bounds for the opening; the
    smaller is compared against the threshold.  Returns a report dict.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    g = u.grid
    its, jss = np.nonzero(field.mask)
    inner = g.interior_mask
    keep = inner[jss] & (its > 0)
    its, jss = its[keep], jss[keep]
    if its.size > max_checks:
        pick = rng.choice(its.size, size=max_checks, replace=False)
        its, jss = its[pick], jss[pick]
    vals2, coords, times = _field_arrays(u)
    smask, it_lo = _domain_masks(u, domain)
    worst = 0.0
    bad = 0
    for it, js in zip(its, jss):
        y = field.vertices[field.witness[it, js]]
        pw = field.kappa * (y - coords[js])
        v1 = _kernels.theta_scan(vals2, coords, times, smask, it_lo, int(it), int(js), pw, 1)
        if v1 > field.kappa * (1.0 + tol):
            pg = _centered_gradient(u, int(it), int(js))
            v1 = min(v1, _kernels.theta_scan(vals2, coords, times, smask, it_lo,
                                             int(it), int(js), pg, 1))
        worst = max(worst, v1 / field.kappa)
        if v1 > field.kappa * (1.0 + tol):
            bad += 1
    return {"ok": bad == 0, "checked": int(its.size), "violations": int(bad),
            "worst_ratio": float(worst), "tol": tol}


# ---------------------------------------------------------------------------
# infimal convolution
# ---------------------------------------------------------------------------


def inf_convolution(u: GridFunction, eps: float) -> GridFunction:
    """u_eps(x,t) = min over nodes of u + (2/eps)(|z-x|^2 + (tau-t)^2).

    Separable: one lower-envelope pass per axis (time included, with the
    same quadratic weight in the time difference).
    """
    if not (eps > 0):
        raise ValueError("eps must be positive")
    g = u.grid
    w = 2.0 / eps
    out = u.values.astype(np.float64, copy=True)
    out = _kernels.envelope_along_axis(out, np.ascontiguousarray(g.times), w, 0)
    for k in range(g.d):
        pos = np.ascontiguousarray(g.axis(k))
        out = _kernels.envelope_along_axis(out, pos, w, 1 + k)
    return GridFunction(g, out)


def inf_convolution_brute(u: GridFunction, eps: float) -> GridFunction:
    """Quadratic-cost reference implementation (small grids only)."""
    if not (eps > 0):
        raise ValueError("eps must be positive")
    g = u.grid
    if g.nt * g.ns > 20000:
        raise ValueError("brute oracle is restricted to small grids")
    coords, times = g.coords, g.times
    flat = u.flat
    out = np.empty_like(flat)
    for it in range(g.nt):
        for js in range(g.ns):
            gap = coords - coords[js][None, :]
            sq = np.einsum("ij,ij->i", gap, gap)
            tq = (times - times[it]) ** 2
            out[it, js] = (flat + (2.0 / eps) * (sq[None, :] + tq[:, None])).min()
    return GridFunction(g, out.reshape(u.values.shape))


# ---------------------------------------------------------------------------
# contact vertex map and the measure inequality
# ---------------------------------------------------------------------------


def vertex_map(u: GridFunction, a: float, contact_points) -> list[SpaceTimePoint]:
    """Vertex of the opening-``a`` paraboloid touching u at each node:
    ybar = z + Du/a and sbar = t - u/a - |z-ybar|^2 / 2."""
    if not (a > 0):
        raise ValueError("a must be positive")
    g = u.grid
    out = []
    for it, js in contact_points:
        du = _centered_gradient(u, int(it), int(js))
        z = g.coords[js]
        ybar = z + du / a
        sbar = float(g.times[it] - u.flat[it, js] / a - 0.5 * np.dot(du / a, du / a))
        out.append(SpaceTimePoint(ybar, sbar))
    return out


@dataclass
class AbpReport:
    ok: bool
    v_measure: float
    w_measure: float
    constant: float
    bound: float
    residual_min: float
    a: float
    L: float


def abp_check(u: GridFunction, pair: EllipticityPair, a: float, L: float,
              vertices: np.ndarray, vertex_cell_volume: float,
              tol: float | None = None,
              residual_slack: float | None = None) -> AbpReport:
    """Measure inequality |V| <= lam^-d (1 + L/a + Lam d)^{d+1} |W|.

    ``vertices`` is a spatial lattice; for each vertex the touching
    times sweep an interval of vertical shifts, whose lengths sum to the
    vertex-set measure |V|.  |W| counts the union of contact nodes.  The
    hypothesis (a discrete supersolution bound with constant L) is
    residual-checked first; failure refuses the computation.
    """
    if not (a > 0 and L >= 0):
        raise ValueError("need a > 0 and L >= 0")
    g = u.grid
    spec = pucci_plus_spec(g.d, pair.lam, pair.Lam)
    if residual_slack is None:
        residual_slack = 10.0 * (g.dx + g.dt) * (1.0 + float(np.abs(u.values).max()))
    rmin = math.inf
    for n in range(g.nt - 1):
        fv = stencil_eval(spec, u.values[n], g.dx)
        keep = ~np.isnan(fv)
        r = (u.values[n + 1] - u.values[n])[keep] / g.dt + fv[keep]
        rmin = min(rmin, float(r.min()))
    if rmin < -L - residual_slack:
        raise ValueError(
            f"supersolution check failed: min residual {rmin:.4g} < -L = {-L:.4g}"
        )

    vals2, coords, times = _field_arrays(u)
    smask = np.ones(g.ns, dtype=bool)
    vs = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    mem_tol = a * g.dx**2 if tol is None else tol
    mask = np.zeros((g.nt, g.ns), dtype=bool)
    v_measure = 0.0
    for vi in range(vs.shape[0]):
        gap = coords - vs[vi][None, :]
        sqdist = 0.5 * np.einsum("ij,ij->i", gap, gap)
        w = vals2 + a * sqdist[None, :] - a * times[:, None]
        run = np.minimum.accumulate(w.min(axis=1))
        mask |= w <= (run + mem_tol)[:, None]
        v_measure += vertex_cell_volume * (run[0] - run[-1]) / a
    w_measure = float(mask.sum()) * g.dx**g.d * g.dt
    constant = pair.lam**-g.d * (1.0 + L / a + pair.Lam * g.d) ** (g.d + 1)
    bound = constant * w_measure
    return AbpReport(ok=v_measure <= bound * (1.0 + 1e-9) + 1e-300,
                     v_measure=v_measure, w_measure=w_measure,
                     constant=constant, bound=bound, residual_min=rmin,
                     a=a, L=L)


# ---------------------------------------------------------------------------
# expansion assembly and derivative inequalities
# ---------------------------------------------------------------------------


def assemble_expansion(u: GridFunction, base: SpaceTimePoint,
                       p_certificates, F: OperatorSpec, g_value: float
                       ) -> QuadraticExpansion:
    """Expansion with curvature from the partials' touching slopes.

    ``p_certificates`` holds one slope vector per spatial direction,
    certifying a touching paraboloid of each discrete partial
    derivative; their symmetrized matrix is the curvature, and the time
    slope is ``-F(M) + g(base)``.
    """
    g = u.grid
    if len(p_certificates) != g.d:
        raise ValueError("need one certificate per spatial direction")
    raw = np.stack([np.asarray(c.p if isinstance(c, ThetaCertificate) else c,
                               dtype=np.float64)
                    for c in p_certificates])
    M = 0.5 * (raw + raw.T)
    b = -eval_operator(F, M) + g_value
    it, js = _locate(u, base)
    p = _centered_gradient(u, it, js)
    return QuadraticExpansion(base=base, value=float(u.flat[it, js]),
                              b=float(b), p=p, M=M)


@dataclass
class DirectionalReport:
    ok: bool
    lower_margin: float
    upper_margin: float
    slack: float
    g_norm: float


def directional_derivative_check(u: GridFunction, e, g_norm: float,
                                 pair: EllipticityPair,
                                 slack: float | None = None) -> DirectionalReport:
    """Extremal inequalities for a difference quotient of u.

    Forms ``u_e`` by centered differencing along a lattice direction
    and checks ``du_e/dt + P-(D^2 u_e) <= |g| + slack`` and
    ``du_e/dt + P+(D^2 u_e) >= -|g| - slack`` on interior nodes.
    """
    g = u.grid
    e = np.asarray(e, dtype=np.float64).reshape(-1)
    if e.shape[0] != g.d or not math.isclose(float(np.linalg.norm(e)), 1.0,
                                             rel_tol=0, abs_tol=1e-9):
        raise ValueError("e must be a unit d-vector")
    step = np.rint(e * math.sqrt(2.0)) if g.d == 2 and np.all(np.abs(np.abs(e) - math.sqrt(0.5)) < 1e-9) \
        else np.rint(e)
    if not np.allclose(step / np.linalg.norm(step), e, atol=1e-9):
        raise ValueError("e must point along a lattice direction (axis or diagonal)")
    step = step.astype(np.int64)
    h = float(np.linalg.norm(step)) * g.dx

    vals = u.values
    if g.d == 1:
        de = (vals[:, 2:] - vals[:, :-2]) / (2.0 * h)
        de = np.pad(de, ((0, 0), (1, 1)), constant_values=np.nan)
    else:
        si, sj = int(step[0]), int(step[1])
        de = np.full_like(vals, np.nan)
        de[:, 1:-1, 1:-1] = (vals[:, 1 + si:vals.shape[1] - 1 + si or None,
                                  1 + sj:vals.shape[2] - 1 + sj or None]
                             - vals[:, 1 - si:vals.shape[1] - 1 - si or None,
                                    1 - sj:vals.shape[2] - 1 - sj or None]) / (2.0 * h)
    if slack is None:
        scale = float(np.nanmax(np.abs(de))) + 1.0
        slack = 10.0 * (g.dx + g.dt) * scale
    plus = pucci_plus_spec(g.d, pair.lam, pair.Lam)
    minus = pucci_minus_spec(g.d, pair.lam, pair.Lam)
    low = math.inf
    high = math.inf
    for n in range(g.nt - 1):
        lvl = de[n]
        fin = ~np.isnan(lvl)
        fp = stencil_eval(plus, np.where(fin, lvl, 0.0), g.dx)
        fm = stencil_eval(minus, np.where(fin, lvl, 0.0), g.dx)
        nxt_fin = ~np.isnan(de[n + 1])
        keep = (~np.isnan(fp)) & fin & nxt_fin
        if g.d == 1:
            keep[:2] = keep[-2:] = False
        else:
            keep[:2, :] = keep[-2:, :] = False
            keep[:, :2] = keep[:, -2:] = False
        if not keep.any():
            continue
        dt_term = (de[n + 1] - lvl)[keep] / g.dt
        high = min(high, float((g_norm + slack - (dt_term + fm[keep])).min()))
        low = min(low, float(((dt_term + fp[keep]) + g_norm + slack).min()))
    ok = low >= 0.0 and high >= 0.0
    return DirectionalReport(ok=ok, lower_margin=low, upper_margin=high,
                             slack=slack, g_norm=g_norm)


# ---------------------------------------------------------------------------
# survival tables and decay fits
# ---------------------------------------------------------------------------


@dataclass
class SurvivalFit:
    kappas: np.ndarray
    survival: np.ndarray
    epsilon_hat: float | None
    c_hat: float | None
    refused: bool
    reason: str


def survival_and_fit(field, kappa_grid, cell_volume: float | None = None) -> SurvivalFit:
    """Measure of {value > kappa} per kappa, with a log-log line fit.

    Accepts a ThetaField/PsiField (their cell volume is used) or a raw
    value array with ``cell_volume``.  Infinite values always count.
    The fit runs on strictly positive survival entries; fewer than 3 of
    them, or a flat table, refuses the fit (table still returned).
    """
    if isinstance(field, (ThetaField, PsiField)):
        vals = field.values
        cv = field.cell_volume
    else:
        vals = np.asarray(field, dtype=np.float64)
        if cell_volume is None:
            raise ValueError("cell_volume required for raw arrays")
        cv = float(cell_volume)
    ks = np.asarray(sorted(kappa_grid), dtype=np.float64)
    if ks.size == 0 or ks[0] <= 0:
        raise ValueError("kappa grid must be positive")
    surv = np.array([cv * float(np.count_nonzero(vals > k)) for k in ks])
    pos = surv > 0
    if pos.sum() < 3:
        return SurvivalFit(ks, surv, None, None, True, "fewer than 3 nonzero survival points")
    x = np.log(ks[pos])
    y = np.log(surv[pos])
    if np.ptp(y) < 1e-12:
        return SurvivalFit(ks, surv, None, None, True, "survival is constant on the grid")
    slope, intercept = np.polyfit(x, y, 1)
    return SurvivalFit(ks, surv, float(-slope), float(math.exp(intercept)), False, "")


def survival_dominated(fit: SurvivalFit, C: float, eps: float, kappa0: float) -> bool:
    """True when survival(kappa) <= C (kappa/kappa0)^-eps for tabulated
    kappa >= kappa0."""
    sel = fit.kappas >= kappa0 * (1 - 1e-12)
    if not sel.any():
        return True
    bound = C * (fit.kappas[sel] / kappa0) ** (-eps)
    return bool(np.all(fit.survival[sel] <= bound * (1 + 1e-9)))


def rescaled_remainder(u_fn, expansion: QuadraticExpansion, r: float,
                       n: int = 33) -> float:
    """sup of |u - Q|(z + 4 r x, s + 16 r^2 tau) / (16 r^2) over the unit
    cylinder |x| <= 1, -1 <= tau <= 0 (continuum battery functions)."""
    z, s = expansion.base.x, expansion.base.t
    d = expansion.base.d
    axes = [np.linspace(-1.0, 1.0, n) for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    xs = np.stack([m.ravel() for m in mesh], axis=1)
    xs = xs[np.einsum("ij,ij->i", xs, xs) <= 1.0]
    taus = np.linspace(-1.0, 0.0, n)
    worst = 0.0
    for tau in taus:
        pts = z[None, :] + 4.0 * r * xs
        ts = np.full(xs.shape[0], s + 16.0 * r * r * tau)
        diff = np.abs(np.asarray(u_fn(pts, ts)) - expansion(pts, ts))
        worst = max(worst, float(diff.max()))
    return worst / (16.0 * r * r)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def field_to_csv(field, path) -> None:
    """Node coordinates, values and certificate columns."""
    xs, ts = field.base_coords()
    d = field.grid.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(field, ThetaField):
            head = [f"x{k}" for k in range(d)] + ["t", "theta_lower", "theta_upper", "theta"]
            head += [f"p{k}" for k in range(d)]
            w.writerow(head)
            th = field.theta
            for i in range(xs.shape[0]):
                w.writerow([f"{v:.17g}" for v in (*xs[i], ts[i], field.lower[i],
                                                  field.upper[i], th[i], *field.slopes[i])])
        else:
            head = [f"x{k}" for k in range(d)] + ["t", "psi", "b"]
            head += [f"p{k}" for k in range(d)]
            head += [f"M{k}{l}" for k in range(d) for l in range(d)]
            w.writerow(head)
            for i in range(xs.shape[0]):
                w.writerow([f"{v:.17g}" for v in (*xs[i], ts[i], field.values[i], field.b[i],
                                                  *field.slopes[i], *field.curvatures[i].ravel())])


def mask_to_gridfunction(field: KappaSetField) -> GridFunction:
    """0/1 indicator on the grid, for binary serialization."""
    vals = field.mask.astype(np.float64).reshape((field.grid.nt,) + field.grid.spatial_shape)
    return GridFunction(field.grid, vals)
