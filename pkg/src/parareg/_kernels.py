"""Hot inner loops with two interchangeable implementations.

Every kernel ships as a compiled loop (numba ``@njit``) and a vectorized
or plain-python numpy twin.  The active path is chosen once at import:
set ``PARAREG_NO_NUMBA=1`` (or any value other than ``0``) to force the
numpy fallback, e.g. on machines where numba is unavailable or while
debugging.  ``benchmarks/bench_kernels.py`` times one against the other.

Array conventions used throughout:

* ``vals2``   -- field values, shape ``(Nt, Ns)``, C-contiguous float64
* ``coords``  -- node coordinates, shape ``(Ns, d)``
* ``times``   -- time levels, shape ``(Nt,)``, increasing
* ``smask``   -- spatial domain mask, shape ``(Ns,)``, bool

All reductions are max/min only, so results are bitwise independent of
the thread partition.
"""

from __future__ import annotations

import os

import numpy as np

_FORCED_OFF = os.environ.get("PARAREG_NO_NUMBA", "0").strip() not in ("", "0")

try:
    if _FORCED_OFF:
        raise ImportError("numba disabled by PARAREG_NO_NUMBA")
    from numba import njit, prange

    NUMBA_ACTIVE = True
except ImportError:
    NUMBA_ACTIVE = False
    prange = range

    def njit(*args, **kwargs):  # signature-compatible no-op
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


def impl_name() -> str:
    return "numba" if NUMBA_ACTIVE else "numpy"


# ---------------------------------------------------------------------------
# touching-paraboloid scan (one-sided, fixed slope certificate)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _theta_scan_loop(vals2, coords, times, smask, it_lo, ib_t, jb, p, stride_t):
    nt, ns = vals2.shape
    d = coords.shape[1]
    ub = vals2[ib_t, jb]
    tb = times[ib_t]
    best = 0.0
    it = ib_t
    while it >= it_lo:
        dt = tb - times[it]
        for js in range(ns):
            if not smask[js]:
                continue
            sq = 0.0
            dot = 0.0
            for k in range(d):
                dx = coords[js, k] - coords[jb, k]
                sq += dx * dx
                dot += p[k] * dx
            den = 0.5 * sq + dt
            if den < 1e-30:
                continue
            num = ub + dot - vals2[it, js]
            v = num / den
            if v > best:
                best = v
        it -= stride_t
    return best


def _theta_scan_numpy(vals2, coords, times, smask, it_lo, ib_t, jb, p, stride_t):
    idx = np.arange(ib_t, it_lo - 1, -stride_t)[::-1]
    xb = coords[jb]
    xs = coords[smask] - xb
    sq = 0.5 * np.einsum("ij,ij->i", xs, xs)
    dot = xs @ p
    ub = vals2[ib_t, jb]
    tb = times[ib_t]
    den = sq[None, :] + (tb - times[idx])[:, None]
    num = ub + dot[None, :] - vals2[idx][:, smask]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den >= 1e-30, num / den, -np.inf)
    best = float(ratio.max()) if ratio.size else 0.0
    return max(best, 0.0)


@njit(cache=True, parallel=True)
def _theta_field_loop(vals2, coords, times, smask, it_lo, base_it, base_js, P, stride_t):
    nb = base_it.shape[0]
    out = np.empty(nb, dtype=np.float64)
    for b in prange(nb):
        out[b] = _theta_scan_loop(
            vals2, coords, times, smask, it_lo, base_it[b], base_js[b], P[b], stride_t
        )
    return out


def _theta_field_numpy(vals2, coords, times, smask, it_lo, base_it, base_js, P, stride_t):
    nb = base_it.shape[0]
    out = np.empty(nb, dtype=np.float64)
    for b in range(nb):
        out[b] = _theta_scan_numpy(
            vals2, coords, times, smask, it_lo, base_it[b], base_js[b], P[b], stride_t
        )
    return out


def theta_scan(vals2, coords, times, smask, it_lo, ib_t, jb, p, stride_t=1):
    """Largest paraboloid-opening ratio against one base node.

    Returns ``max(0, sup (u(base) + p.(y-x) - u(y,s)) / (|y-x|^2/2 + t-s))``
    over masked nodes with ``s <= t``; the mirror quantity is obtained by
    passing ``-vals2`` and ``-p``.
    """
    args = (vals2, coords, times, smask, it_lo, ib_t, jb, p, stride_t)
    if NUMBA_ACTIVE:
        return max(0.0, _theta_scan_loop(*args))
    return _theta_scan_numpy(*args)


def theta_field(vals2, coords, times, smask, it_lo, base_it, base_js, P, stride_t=1):
    """theta_scan over many bases; P holds one slope row per base."""
    args = (vals2, coords, times, smask, it_lo, base_it, base_js, P, stride_t)
    if NUMBA_ACTIVE:
        return np.maximum(_theta_field_loop(*args), 0.0)
    return _theta_field_numpy(*args)


# ---------------------------------------------------------------------------
# cubic-error scan (second-order certificate)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _psi_scan_loop(vals2, coords, times, smask, it_lo, ib_t, jb, bcoef, p, M, stride_t):
    nt, ns = vals2.shape
    d = coords.shape[1]
    ub = vals2[ib_t, jb]
    tb = times[ib_t]
    best = 0.0
    it = ib_t
    while it >= it_lo:
        dt = tb - times[it]
        for js in range(ns):
            if not smask[js]:
                continue
            sq = 0.0
            dot = 0.0
            quad = 0.0
            for k in range(d):
                dx = coords[js, k] - coords[jb, k]
                sq += dx * dx
                dot += p[k] * dx
                for l in range(d):
                    quad += dx * M[k, l] * (coords[js, l] - coords[jb, l])
            den = sq * np.sqrt(sq) + dt * np.sqrt(dt)
            if den < 1e-30:
                continue
            num = abs(vals2[it, js] - ub - dot - bcoef * (-dt) - 0.5 * quad)
            v = num / den
            if v > best:
                best = v
        it -= stride_t
    return best


def _psi_scan_numpy(vals2, coords, times, smask, it_lo, ib_t, jb, bcoef, p, M, stride_t):
    idx = np.arange(ib_t, it_lo - 1, -stride_t)[::-1]
    xb = coords[jb]
    xs = coords[smask] - xb
    sq = np.einsum("ij,ij->i", xs, xs)
    dot = xs @ p
    quad = np.einsum("ij,jk,ik->i", xs, M, xs)
    ub = vals2[ib_t, jb]
    tb = times[ib_t]
    dt = (tb - times[idx])[:, None]
    den = (sq * np.sqrt(sq))[None, :] + dt * np.sqrt(dt)
    num = np.abs(vals2[idx][:, smask] - ub - dot[None, :] + bcoef * dt - 0.5 * quad[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den >= 1e-30, num / den, -np.inf)
    best = float(ratio.max()) if ratio.size else 0.0
    return max(best, 0.0)


@njit(cache=True, parallel=True)
def _psi_field_loop(vals2, coords, times, smask, it_lo, base_it, base_js, B, P, Ms, stride_t):
    nb = base_it.shape[0]
    out = np.empty(nb, dtype=np.float64)
    for b in prange(nb):
        out[b] = _psi_scan_loop(
            vals2, coords, times, smask, it_lo,
            base_it[b], base_js[b], B[b], P[b], Ms[b], stride_t,
        )
    return out


def psi_scan(vals2, coords, times, smask, it_lo, ib_t, jb, bcoef, p, M, stride_t=1):
    """Worst normalized deviation of u from one quadratic expansion.

    Returns ``sup |u - Q| / (|y-x|^3 + |t-s|^{3/2})`` over past masked
    nodes, where Q carries slope p, time slope bcoef and curvature M.
    """
    args = (vals2, coords, times, smask, it_lo, ib_t, jb, bcoef, p, M, stride_t)
    if NUMBA_ACTIVE:
        return max(0.0, _psi_scan_loop(*args))
    return _psi_scan_numpy(*args)


def psi_field(vals2, coords, times, smask, it_lo, base_it, base_js, B, P, Ms, stride_t=1):
    args = (vals2, coords, times, smask, it_lo, base_it, base_js, B, P, Ms, stride_t)
    if NUMBA_ACTIVE:
        return np.maximum(_psi_field_loop(*args), 0.0)
    nb = base_it.shape[0]
    out = np.empty(nb, dtype=np.float64)
    for b in range(nb):
        out[b] = _psi_scan_numpy(
            vals2, coords, times, smask, it_lo, base_it[b], base_js[b], B[b], P[b], Ms[b], stride_t
        )
    return out


# ---------------------------------------------------------------------------
# contact-set sweep for one paraboloid vertex
# ---------------------------------------------------------------------------


@njit(cache=True)
def _akappa_sweep_loop(vals2, sqdist, times, smask, kappa, tol):
    nt, ns = vals2.shape
    marks = np.zeros((nt, ns), dtype=np.bool_)
    run = 1e300
    for it in range(nt):
        shift = -kappa * times[it]
        rowmin = 1e300
        for js in range(ns):
            if not smask[js]:
                continue
            w = vals2[it, js] + kappa * sqdist[js] + shift
            if w < rowmin:
                rowmin = w
        if rowmin < run:
            run = rowmin
        lim = run + tol
        for js in range(ns):
            if not smask[js]:
                continue
            w = vals2[it, js] + kappa * sqdist[js] + shift
            if w <= lim:
                marks[it, js] = True
    return marks


def _akappa_sweep_numpy(vals2, sqdist, times, smask, kappa, tol):
    w = vals2 + kappa * sqdist[None, :] - kappa * times[:, None]
    w = np.where(smask[None, :], w, np.inf)
    run = np.minimum.accumulate(w.min(axis=1))
    return w <= (run + tol)[:, None]


def akappa_sweep(vals2, sqdist, times, smask, kappa, tol):
    """Nodes where the shifted paraboloid attains its running infimum.

    ``sqdist`` is ``0.5 |x - y|^2`` against the vertex; a node is marked
    when its value lies within ``tol`` of the running minimum over all
    earlier (and current) times.
    """
    if NUMBA_ACTIVE:
        return _akappa_sweep_loop(vals2, sqdist, times, smask, kappa, tol)
    return _akappa_sweep_numpy(vals2, sqdist, times, smask, kappa, tol)


# ---------------------------------------------------------------------------
# lower envelope of parabolas (one line)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _envelope_line_loop(f, pos, weight):
    n = f.shape[0]
    out = np.empty(n, dtype=np.float64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    k = 0
    v[0] = 0
    z[0] = -1e300
    z[1] = 1e300
    for q in range(1, n):
        fq = f[q] + weight * pos[q] * pos[q]
        while True:
            r = v[k]
            s = (fq - (f[r] + weight * pos[r] * pos[r])) / (2.0 * weight * (pos[q] - pos[r]))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = 1e300
    k = 0
    for q in range(n):
        while z[k + 1] < pos[q]:
            k += 1
        dq = pos[q] - pos[v[k]]
        out[q] = weight * dq * dq + f[v[k]]
    return out


def _envelope_line_py(f, pos, weight):
    n = f.shape[0]
    out = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        fq = f[q] + weight * pos[q] * pos[q]
        while True:
            r = v[k]
            s = (fq - (f[r] + weight * pos[r] * pos[r])) / (2.0 * weight * (pos[q] - pos[r]))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < pos[q]:
            k += 1
        out[q] = weight * (pos[q] - pos[v[k]]) ** 2 + f[v[k]]
    return out


def envelope_along_axis(arr, pos, weight, axis):
    """min-convolution with ``weight * distance^2`` along one array axis."""
    moved = np.moveaxis(np.ascontiguousarray(arr, dtype=np.float64), axis, -1)
    shape = moved.shape
    flat = moved.reshape(-1, shape[-1])
    line = _envelope_line_loop if NUMBA_ACTIVE else _envelope_line_py
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = line(np.ascontiguousarray(flat[i]), pos, weight)
    return np.moveaxis(out.reshape(shape), -1, axis)


# ---------------------------------------------------------------------------
# explicit monotone time step
# ---------------------------------------------------------------------------

OP_PUCCI_PLUS = 0
OP_PUCCI_MINUS = 1
OP_LINEAR = 2
OP_BELLMAN = 3


@njit(cache=True, inline="always")
def _fplus(s, lam, Lam):
    # envelope slope for the convex extremal operator
    return -lam * s if s > 0.0 else -Lam * s


@njit(cache=True, inline="always")
def _fminus(s, lam, Lam):
    return -Lam * s if s > 0.0 else -lam * s


@njit(cache=True)
def _step_1d_loop(u, dx2, dt, code, lam, Lam, weights, offset, shift, g, out):
    n = u.shape[0]
    for i in range(1, n - 1):
        dd = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / dx2 + shift
        if code == OP_PUCCI_PLUS:
            fval = _fplus(dd, lam, Lam)
        elif code == OP_PUCCI_MINUS:
            fval = _fminus(dd, lam, Lam)
        elif code == OP_LINEAR:
            fval = -weights[0, 0] * dd
        else:
            fval = 1e300
            for r in range(weights.shape[0]):
                cand = -weights[r, 0] * dd + weights[r, 1]
                if cand < fval:
                    fval = cand
        out[i] = u[i] - dt * (fval + offset) + dt * g[i]


def _step_1d_numpy(u, dx2, dt, code, lam, Lam, weights, offset, shift, g, out):
    dd = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx2 + shift
    if code == OP_PUCCI_PLUS:
        fval = np.where(dd > 0.0, -lam * dd, -Lam * dd)
    elif code == OP_PUCCI_MINUS:
        fval = np.where(dd > 0.0, -Lam * dd, -lam * dd)
    elif code == OP_LINEAR:
        fval = -weights[0, 0] * dd
    else:
        cands = -weights[:, 0][:, None] * dd[None, :] + weights[:, 1][:, None]
        fval = cands.min(axis=0)
    out[1:-1] = u[1:-1] - dt * (fval + offset) + dt * g[1:-1]
    return out


@njit(cache=True, parallel=True)
def _step_2d_loop(u, dx2, dt, code, lam, Lam, weights, offset, shift, g, out):
    n = u.shape[0]
    for i in prange(1, n - 1):
        for j in range(1, n - 1):
            c = u[i, j]
            d1 = (u[i + 1, j] - 2.0 * c + u[i - 1, j]) / dx2 + shift
            d2 = (u[i, j + 1] - 2.0 * c + u[i, j - 1]) / dx2 + shift
            dp = (u[i + 1, j + 1] - 2.0 * c + u[i - 1, j - 1]) / (2.0 * dx2) + shift
            dm = (u[i + 1, j - 1] - 2.0 * c + u[i - 1, j + 1]) / (2.0 * dx2) + shift
            if code == OP_PUCCI_PLUS:
                fa = _fplus(d1, lam, Lam) + _fplus(d2, lam, Lam)
                fb = _fplus(dp, lam, Lam) + _fplus(dm, lam, Lam)
                fval = fa if fa > fb else fb
            elif code == OP_PUCCI_MINUS:
                fa = _fminus(d1, lam, Lam) + _fminus(d2, lam, Lam)
                fb = _fminus(dp, lam, Lam) + _fminus(dm, lam, Lam)
                fval = fa if fa < fb else fb
            elif code == OP_LINEAR:
                fval = -(weights[0, 0] * d1 + weights[0, 1] * d2
                         + weights[0, 2] * dp + weights[0, 3] * dm)
            else:
                fval = 1e300
                for r in range(weights.shape[0]):
                    cand = -(weights[r, 0] * d1 + weights[r, 1] * d2
                             + weights[r, 2] * dp + weights[r, 3] * dm) + weights[r, 4]
                    if cand < fval:
                        fval = cand
            out[i, j] = c - dt * (fval + offset) + dt * g[i, j]


def _step_2d_numpy(u, dx2, dt, code, lam, Lam, weights, offset, shift, g, out):
    c = u[1:-1, 1:-1]
    d1 = (u[2:, 1:-1] - 2.0 * c + u[:-2, 1:-1]) / dx2 + shift
    d2 = (u[1:-1, 2:] - 2.0 * c + u[1:-1, :-2]) / dx2 + shift
    dp = (u[2:, 2:] - 2.0 * c + u[:-2, :-2]) / (2.0 * dx2) + shift
    dm = (u[2:, :-2] - 2.0 * c + u[:-2, 2:]) / (2.0 * dx2) + shift

    def fplus(s):
        return np.where(s > 0.0, -lam * s, -Lam * s)

    def fminus(s):
        return np.where(s > 0.0, -Lam * s, -lam * s)

    if code == OP_PUCCI_PLUS:
        fval = np.maximum(fplus(d1) + fplus(d2), fplus(dp) + fplus(dm))
    elif code == OP_PUCCI_MINUS:
        fval = np.minimum(fminus(d1) + fminus(d2), fminus(dp) + fminus(dm))
    elif code == OP_LINEAR:
        fval = -(weights[0, 0] * d1 + weights[0, 1] * d2
                 + weights[0, 2] * dp + weights[0, 3] * dm)
    else:
        fval = np.full_like(c, np.inf)
        for r in range(weights.shape[0]):
            cand = -(weights[r, 0] * d1 + weights[r, 1] * d2
                     + weights[r, 2] * dp + weights[r, 3] * dm) + weights[r, 4]
            fval = np.minimum(fval, cand)
    out[1:-1, 1:-1] = c - dt * (fval + offset) + dt * g[1:-1, 1:-1]
    return out


def step_interior(u, dx2, dt, code, lam, Lam, weights, offset, shift, g, out):
    """One forward-Euler update of all interior nodes (boundary untouched)."""
    if u.ndim == 1:
        fn = _step_1d_loop if NUMBA_ACTIVE else _step_1d_numpy
    else:
        fn = _step_2d_loop if NUMBA_ACTIVE else _step_2d_numpy
    fn(u, dx2, dt, code, lam, Lam, weights, offset, shift, g, out)
    return out
