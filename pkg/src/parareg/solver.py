"""Monotone explicit finite differences for ``du/dt + F(D^2 u) = g``.

Space is discretized on a uniform grid over the cylinder ``Q_rho(x0, t0)``
and time by forward Euler under the CFL restriction
``dt <= dx^2 / (2 Lam d S)``.  The spatial operator is evaluated by a
monotone stencil: in 1d the second difference split by sign through the
extremal-operator formula, in 2d a wide stencil over the axis pair and
the two diagonal directions, combined frame by frame so that the update
is nondecreasing in every neighbor value.  Quadratics whose Hessian is
diagonal in a stencil frame are reproduced exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .operators import OperatorSpec, eval_operator

MEMORY_BUDGET_BYTES = 512 * 1024 * 1024


class CflError(ValueError):
    """Time step too large for the monotone update."""

    def __init__(self, dt: float, suggested: float):
        super().__init__(
            f"dt = {dt:.6g} violates the monotonicity bound; use dt <= {suggested:.6g}"
        )
        self.suggested_dt = suggested


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid over Q_rho(x0, t0).

    ``Nx`` nodes per spatial axis on ``[x0 - rho, x0 + rho]`` and ``nt``
    time levels from the bottom face ``t0 - rho^2`` to the top ``t0``
    (inclusive, exactly aligned).
    """

    d: int
    rho: float
    Nx: int
    nt: int
    t0: float = 0.0
    x0: np.ndarray = None

    def __post_init__(self):
        if not (1 <= self.d <= 2):
            raise ValueError("solver grids support d in {1, 2}")
        if self.Nx < 5 or self.nt < 2:
            raise ValueError("need Nx >= 5 and nt >= 2")
        if not (self.rho > 0):
            raise ValueError("rho must be positive")
        x0 = np.zeros(self.d) if self.x0 is None else np.asarray(self.x0, dtype=np.float64)
        if x0.shape != (self.d,):
            raise ValueError("x0 must have shape (d,)")
        object.__setattr__(self, "x0", x0)
        if self.nt * self.Nx**self.d * 8 > MEMORY_BUDGET_BYTES:
            raise ValueError("grid exceeds the memory budget; reduce Nx or nt")

    @classmethod
    def for_problem(cls, d, rho, Nx, Lam, stencil_sum=1.0, safety=0.9,
                    t0=0.0, x0=None) -> "Grid":
        """Grid with nt chosen by the CFL bound for ellipticity Lam."""
        dx = 2.0 * rho / (Nx - 1)
        dt_max = safety * dx * dx / (2.0 * Lam * d * stencil_sum)
        nt = int(math.ceil(rho * rho / dt_max)) + 1
        return cls(d, rho, Nx, nt, t0=t0, x0=x0)

    @property
    def dx(self) -> float:
        return 2.0 * self.rho / (self.Nx - 1)

    @property
    def dt(self) -> float:
        return self.rho * self.rho / (self.nt - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0 - self.rho**2, self.t0, self.nt)

    def axis(self, k: int) -> np.ndarray:
        return np.linspace(self.x0[k] - self.rho, self.x0[k] + self.rho, self.Nx)

    @property
    def spatial_shape(self) -> tuple:
        return (self.Nx,) * self.d

    @property
    def ns(self) -> int:
        return self.Nx**self.d

    @property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (ns, d), C order (last axis fastest)."""
        axes = [self.axis(k) for k in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def interior_mask(self) -> np.ndarray:
        """Flat bool mask of nodes not on the spatial boundary."""
        m = np.zeros(self.spatial_shape, dtype=bool)
        if self.d == 1:
            m[1:-1] = True
        else:
            m[1:-1, 1:-1] = True
        return m.ravel()

    @property
    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask

    def cfl_bound(self, Lam: float, stencil_sum: float = 1.0) -> float:
        return self.dx**2 / (2.0 * Lam * self.d * stencil_sum)


@dataclass
class GridFunction:
    """Values on a grid, shape (nt,) + spatial_shape, time-outer."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        want = (self.grid.nt,) + self.grid.spatial_shape
        if self.values.shape != want:
            raise ValueError(f"values shape {self.values.shape} != {want}")

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        xs = grid.coords
        vals = np.empty((grid.nt, grid.ns))
        for it, t in enumerate(grid.times):
            vals[it] = fn(xs, np.full(xs.shape[0], t))
        return cls(grid, vals.reshape((grid.nt,) + grid.spatial_shape))

    @property
    def flat(self) -> np.ndarray:
        """(nt, ns) view."""
        return self.values.reshape(self.grid.nt, self.grid.ns)

    def save(self, path) -> None:
        """Binary layout: little-endian int64 d, Nx, Nt then float64
        rho, t0, dx, dt, then the values row-major (time outer)."""
        g = self.grid
        with open(path, "wb") as fh:
            fh.write(struct.pack("<3q", g.d, g.Nx, g.nt))
            fh.write(struct.pack("<4d", g.rho, g.t0, g.dx, g.dt))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GridFunction":
        with open(path, "rb") as fh:
            d, Nx, nt = struct.unpack("<3q", fh.read(24))
            rho, t0, dx, dt = struct.unpack("<4d", fh.read(32))
            grid = Grid(d, rho, Nx, nt, t0=t0)
            if not (math.isclose(grid.dx, dx, rel_tol=1e-12)
                    and math.isclose(grid.dt, dt, rel_tol=1e-12)):
                raise ValueError("inconsistent header spacings")
            raw = np.frombuffer(fh.read(nt * Nx**d * 8), dtype="<f8")
        return cls(grid, raw.reshape((nt,) + (Nx,) * d).copy())

    def to_csv(self, path) -> None:
        g = self.grid
        xs = g.coords
        cols = [np.tile(xs[:, k], g.nt) for k in range(g.d)]
        cols.append(np.repeat(g.times, g.ns))
        cols.append(self.flat.ravel())
        header = ",".join([f"x{k}" for k in range(g.d)] + ["t", "u"])
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header=header, comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# exact solutions used as data, oracles, and decay batteries
# ---------------------------------------------------------------------------


@dataclass
class ExactSolution:
    """Closed-form space-time function with vectorized evaluation."""

    name: str
    params: dict
    fn: object

    def __call__(self, xs, ts):
        return self.fn(np.atleast_2d(xs), np.asarray(ts, dtype=np.float64))


def heat_mode(d: int, rho: float, k: int = 1, amp: float = 1.0,
              x0=None, t0: float = 0.0) -> ExactSolution:
    """Product sine mode decaying under the heat flow (F = -trace)."""
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=np.float64)
    tb = t0 - rho * rho
    rate = d * (k * math.pi / rho) ** 2

    def fn(xs, ts):
        prod = np.ones(xs.shape[0])
        for a in range(d):
            prod *= np.sin(k * math.pi * (xs[:, a] - x0[a]) / rho)
        return amp * np.exp(-rate * (ts - tb)) * prod

    return ExactSolution("heat_mode", dict(d=d, rho=rho, k=k, amp=amp, t0=t0), fn)


def quadratic(M, p=None, b: float = 0.0, c: float = 0.0, center=None,
              tc: float = 0.0) -> ExactSolution:
    """u = (x-xc).M(x-xc)/2 + p.(x-xc) + b (t-tc) + c."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    d = M.shape[0]
    p = np.zeros(d) if p is None else np.asarray(p, dtype=np.float64)
    xc = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64)

    def fn(xs, ts):
        dxs = xs - xc[None, :]
        return (0.5 * np.einsum("ij,jk,ik->i", dxs, M, dxs)
                + dxs @ p + b * (ts - tc) + c)

    return ExactSolution("quadratic", dict(M=M, p=p, b=b, c=c, center=xc, tc=tc), fn)


def cusp_space(d: int, gamma: float, sign: float = -1.0, center=None) -> ExactSolution:
    """u = sign * |x - xc|^(1+gamma), 0 < gamma < 1; time independent.

    With the negative sign this is concave with curvature blowing up at
    the center, a supersolution of the extremal inequality away from it;
    its touching-opening fields have power-law tails.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    xc = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64)

    def fn(xs, ts):
        r = np.linalg.norm(xs - xc[None, :], axis=1)
        return sign * r ** (1.0 + gamma)

    return ExactSolution("cusp_space", dict(d=d, gamma=gamma, sign=sign, center=xc), fn)


def time_ramp(d: int, c: float = 1.0, tc: float = 0.0) -> ExactSolution:
    def fn(xs, ts):
        return c * (ts - tc)

    return ExactSolution("time_ramp", dict(d=d, c=c, tc=tc), fn)


BATTERY = {
    "heat_mode": heat_mode,
    "quadratic": quadratic,
    "cusp_space": cusp_space,
    "time_ramp": time_ramp,
}


# ---------------------------------------------------------------------------
# problem assembly and the explicit scheme
# ---------------------------------------------------------------------------


@dataclass
class ProblemSpec:
    """Operator, source, data, grid.  ``g`` and the data are callables
    ``(xs, ts) -> values`` (``g`` may also be a constant)."""

    operator: OperatorSpec
    grid: Grid
    g: object = 0.0
    initial: object = None
    lateral: object = None

    def g_values(self, xs, t):
        if callable(self.g):
            return np.asarray(self.g(xs, np.full(xs.shape[0], t)), dtype=np.float64)
        return np.full(xs.shape[0], float(self.g))

    def g_sup(self) -> float:
        xs = self.grid.coords
        vals = [np.abs(self.g_values(xs, t)).max() for t in self.grid.times]
        return float(max(vals))


def problem_from_exact(sol: ExactSolution, spec: OperatorSpec, grid: Grid,
                       g=0.0) -> ProblemSpec:
    """Problem whose initial and lateral data are read off ``sol``."""
    return ProblemSpec(operator=spec, grid=grid, g=g,
                       initial=lambda xs, ts: sol(xs, ts),
                       lateral=lambda xs, ts: sol(xs, ts))


def _linear_weights(spec: OperatorSpec) -> np.ndarray:
    C = spec.coeff
    if spec.dim == 1:
        return np.array([[float(C[0, 0]), 0.0]])
    a12 = float(C[0, 1])
    a1 = float(C[0, 0]) - abs(a12)
    a2 = float(C[1, 1]) - abs(a12)
    if min(a1, a2) < -1e-12:
        raise ValueError(
            "coefficient matrix is not diagonally dominant; "
            "no monotone decomposition on the 4-direction stencil"
        )
    return np.array([[max(a1, 0.0), max(a2, 0.0), 2.0 * max(a12, 0.0),
                      2.0 * max(-a12, 0.0)]])


def _stencil_tables(spec: OperatorSpec):
    """Kernel op-code and weight table for an operator spec."""
    e = spec.ellipticity
    if spec.kind == "pucci_plus":
        code = _kernels.OP_PUCCI_PLUS
        weights = np.zeros((1, 5 if spec.dim == 2 else 2))
    elif spec.kind == "pucci_minus":
        code = _kernels.OP_PUCCI_MINUS
        weights = np.zeros((1, 5 if spec.dim == 2 else 2))
    elif spec.kind == "linear":
        code = _kernels.OP_LINEAR
        weights = _linear_weights(spec)
    elif spec.kind == "bellman_min":
        code = _kernels.OP_BELLMAN
        rows = []
        for C, c in spec.parts:
            w = _linear_weights(OperatorSpec("linear", spec.dim, e, coeff=C))[0]
            rows.append(np.concatenate([w, [c]]))
        weights = np.array(rows)
    else:
        return None, None  # custom: python path
    return code, np.ascontiguousarray(weights, dtype=np.float64)


def _pucci_wide_2d(u, dx2, lam, Lam, plus: bool, shift: float) -> np.ndarray:
    """Extremal stencil over 4 orthonormal lattice frames (8 directions):
    the axes, the diagonals, and the two (2,1)-type frames with step
    sqrt(5) dx.  Needs a margin of 2; returns the core block."""
    n0, n1 = u.shape
    c = u[2:-2, 2:-2]

    def dd(di, dj):
        step2 = (di * di + dj * dj) * dx2
        hi = u[2 + di:n0 - 2 + di, 2 + dj:n1 - 2 + dj]
        lo = u[2 - di:n0 - 2 - di, 2 - dj:n1 - 2 - dj]
        return (hi - 2.0 * c + lo) / step2 + shift

    if plus:
        def f(s):
            return np.where(s > 0.0, -lam * s, -Lam * s)
        combine = np.maximum
    else:
        def f(s):
            return np.where(s > 0.0, -Lam * s, -lam * s)
        combine = np.minimum
    frames = [
        f(dd(1, 0)) + f(dd(0, 1)),
        f(dd(1, 1)) + f(dd(1, -1)),
        f(dd(2, 1)) + f(dd(-1, 2)),
        f(dd(1, 2)) + f(dd(2, -1)),
    ]
    out = frames[0]
    for fr in frames[1:]:
        out = combine(out, fr)
    return out


def stencil_eval(spec: OperatorSpec, u_level: np.ndarray, dx: float,
                 directions: int = 4) -> np.ndarray:
    """F applied to the discrete Hessian of one time level (interior only,
    NaN elsewhere).  Matches the stencil used by ``solve`` exactly.

    ``directions=8`` widens the 2d extremal stencil to the (2,1)-type
    frames where the margin allows, trading stencil width for direction
    resolution; the 1-ring keeps the 4-direction value.
    """
    dx2 = dx * dx
    out = np.full_like(u_level, np.nan)
    if directions not in (4, 8):
        raise ValueError("directions must be 4 or 8")
    wide = (directions == 8 and u_level.ndim == 2
            and spec.kind in ("pucci_plus", "pucci_minus"))
    code, weights = _stencil_tables(spec)
    if code is not None:
        g0 = np.zeros_like(u_level)
        nxt = np.empty_like(u_level)
        _kernels.step_interior(np.ascontiguousarray(u_level, dtype=np.float64),
                               dx2, 1.0, code, spec.ellipticity.lam,
                               spec.ellipticity.Lam, weights, spec.offset,
                               spec.shift, g0, nxt)
        if u_level.ndim == 1:
            out[1:-1] = u_level[1:-1] - nxt[1:-1]
        else:
            out[1:-1, 1:-1] = u_level[1:-1, 1:-1] - nxt[1:-1, 1:-1]
            if wide and u_level.shape[0] >= 5:
                e = spec.ellipticity
                core = _pucci_wide_2d(u_level, dx2, e.lam, e.Lam,
                                      spec.kind == "pucci_plus", spec.shift)
                out[2:-2, 2:-2] = core + spec.offset
        return out
    # custom callback: evaluate on the axis-frame projected Hessian
    if u_level.ndim == 1:
        dd = (u_level[2:] - 2 * u_level[1:-1] + u_level[:-2]) / dx2
        out[1:-1] = [eval_operator(spec, [[v]]) for v in dd]
    else:
        c = u_level[1:-1, 1:-1]
        d1 = (u_level[2:, 1:-1] - 2 * c + u_level[:-2, 1:-1]) / dx2
        d2 = (u_level[1:-1, 2:] - 2 * c + u_level[1:-1, :-2]) / dx2
        vals = np.empty_like(c)
        for i in range(c.shape[0]):
            for j in range(c.shape[1]):
                vals[i, j] = eval_operator(spec, np.diag([d1[i, j], d2[i, j]]))
        out[1:-1, 1:-1] = vals
    return out


def solve(problem: ProblemSpec, directions: int = 4,
          check_data: bool = True) -> GridFunction:
    """March the explicit scheme from the bottom face to the top.

    Parameters
    ----------
    problem : ProblemSpec
        Operator, source and data.  ``initial`` is evaluated on the bottom
        face, ``lateral`` on the spatial boundary at every later level.
    directions : int
        Spatial direction count in 2d (4 default, 8 for the wide
        extremal stencil).
    check_data : bool
        Verify initial and lateral data agree on the bottom edge.

    Returns
    -------
    GridFunction
        All time levels of the approximate solution.

    Raises
    ------
    CflError
        If the grid time step exceeds ``dx^2 / (2 Lam d)``.
    """
    g = problem.grid
    spec = problem.operator
    if spec.dim != g.d:
        raise ValueError("operator dimension does not match the grid")
    bound = g.cfl_bound(spec.ellipticity.Lam)
    if g.dt > bound * (1 + 1e-12):
        raise CflError(g.dt, bound)
    if problem.initial is None or problem.lateral is None:
        raise ValueError("problem needs initial and lateral data")

    xs = g.coords
    bmask = g.boundary_mask
    xb = xs[bmask]
    times = g.times
    vals = np.empty((g.nt, g.ns))
    vals[0] = problem.initial(xs, np.full(g.ns, times[0]))
    if check_data:
        tb = np.full(xb.shape[0], times[0])
        edge_gap = np.abs(vals[0][bmask] - problem.lateral(xb, tb)).max()
        scale = max(1.0, float(np.abs(vals[0]).max()))
        if edge_gap > 1e-9 * scale:
            raise ValueError(
                f"initial and lateral data disagree on the bottom edge by {edge_gap:.3g}"
            )

    use_python = directions != 4
    code, weights = (None, None) if use_python else _stencil_tables(spec)
    dx2 = g.dx * g.dx
    shape = g.spatial_shape
    cur = vals[0].reshape(shape).copy()
    e = spec.ellipticity
    for n in range(g.nt - 1):
        gv = problem.g_values(xs, times[n]).reshape(shape)
        nxt = cur.copy()
        if code is not None:
            _kernels.step_interior(cur, dx2, g.dt, code, e.lam, e.Lam,
                                   weights, spec.offset, spec.shift, gv, nxt)
        else:
            fv = stencil_eval(spec, cur, g.dx, directions=directions)
            inner = ~np.isnan(fv)
            nxt[inner] = cur[inner] - g.dt * fv[inner] + g.dt * gv[inner]
        flat = nxt.ravel()
        flat[bmask] = problem.lateral(xb, np.full(xb.shape[0], times[n + 1]))
        vals[n + 1] = flat
        cur = flat.reshape(shape).copy()
    return GridFunction(g, vals.reshape((g.nt,) + shape))


def residual(u: GridFunction, problem: ProblemSpec) -> GridFunction:
    """Discrete residual ``(u^{n+1}-u^n)/dt + F(D^2 u^n) - g^n`` on interior
    nodes (NaN elsewhere); identically zero on the output of ``solve``."""
    g = u.grid
    spec = problem.operator
    xs = g.coords
    out = np.full((g.nt,) + g.spatial_shape, np.nan)
    for n in range(g.nt - 1):
        lvl = u.values[n]
        fv = stencil_eval(spec, lvl, g.dx)
        gv = problem.g_values(xs, g.times[n]).reshape(g.spatial_shape)
        res = (u.values[n + 1] - lvl) / g.dt + fv - gv
        out[n] = res
    return GridFunction(g, out)


def gradient_fields(u: GridFunction) -> list[GridFunction]:
    """Centered spatial derivatives (one-sided at the boundary)."""
    out = []
    for axis in range(u.grid.d):
        dv = np.gradient(u.values, u.grid.dx, axis=1 + axis)
        out.append(GridFunction(u.grid, dv))
    return out


def time_derivative(u: GridFunction) -> GridFunction:
    return GridFunction(u.grid, np.gradient(u.values, u.grid.dt, axis=0))
