"""Extremal (Pucci) operators, operator specifications, ellipticity checks.

Sign convention: equations read ``du/dt + F(D^2 u) = g`` and degenerate
ellipticity makes F nonincreasing in the matrix argument, so the heat
equation is ``F(M) = -tr(M)``.  The extremal operators over the class
``lam*I <= A <= Lam*I`` are

    pucci_plus(M)  = sup_A -tr(A M) = -lam*sum(mu_j > 0) - Lam*sum(mu_j < 0)
    pucci_minus(M) = inf_A -tr(A M) = -Lam*sum(mu_j > 0) - lam*sum(mu_j < 0)

with mu_j the eigenvalues of M.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

KINDS = ("pucci_plus", "pucci_minus", "linear", "bellman_min", "custom")


@dataclass(frozen=True)
class EllipticityPair:
    """Ellipticity bounds 0 < lam <= Lam."""

    lam: float
    Lam: float

    def __post_init__(self):
        if not (0.0 < self.lam <= self.Lam and np.isfinite(self.Lam)):
            raise ValueError("need 0 < lam <= Lam < inf")


def as_sym_matrix(M, d: int | None = None, tol: float = 1e-12) -> np.ndarray:
    """Validate and symmetrize a d x d matrix, d <= 3."""
    A = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    n = A.shape[0]
    if not (1 <= n <= 3):
        raise ValueError("supported matrix sizes are 1..3")
    if d is not None and n != d:
        raise ValueError(f"expected size {d}, got {n}")
    scale = max(1.0, float(np.abs(A).max()))
    if float(np.abs(A - A.T).max()) > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return 0.5 * (A + A.T)


def sym_eigvals(M, tol: float = 1e-13, max_sweeps: int = 64) -> np.ndarray:
    """Eigenvalues of a symmetric d x d matrix (d <= 3), ascending.

    Cyclic Jacobi rotations until every off-diagonal entry is below
    ``tol`` times the matrix scale; deterministic and dependency-free.
    """
    A = as_sym_matrix(M)
    n = A.shape[0]
    if n == 1:
        return A[0, :1].copy()
    A = A.copy()
    scale = max(float(np.abs(A).max()), 1e-300)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(A[p, q]))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300 * scale:
                    continue
                # classical Jacobi rotation annihilating A[p,q]
                theta = 0.5 * (A[q, q] - A[p, p]) / apq
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                G = np.eye(n)
                G[p, p] = G[q, q] = c
                G[p, q] = s
                G[q, p] = -s
                A = G.T @ A @ G
    return np.sort(np.diag(A))


def pucci_plus(e: EllipticityPair, M) -> float:
    """Maximal extremal operator (sup of -tr(A M) over lam*I <= A <= Lam*I)."""
    mu = sym_eigvals(M)
    pos = mu[mu > 0].sum()
    neg = mu[mu < 0].sum()
    return float(-e.lam * pos - e.Lam * neg)


def pucci_minus(e: EllipticityPair, M) -> float:
    """Minimal extremal operator (inf of -tr(A M))."""
    mu = sym_eigvals(M)
    pos = mu[mu > 0].sum()
    neg = mu[mu < 0].sum()
    return float(-e.Lam * pos - e.lam * neg)


@dataclass(frozen=True)
class OperatorSpec:
    """Description of an operator F acting on symmetric matrices.

    Evaluation is ``base(M + shift * I) + offset`` where ``base`` depends
    on ``kind``:

    * ``pucci_plus`` / ``pucci_minus``: extremal operators for ``ellipticity``
    * ``linear``: ``-tr(coeff @ M)``
    * ``bellman_min``: minimum over ``parts`` of ``-tr(C_i @ M) + c_i``
    * ``custom``: a user callback (not JSON-serializable)
    """

    kind: str
    dim: int
    ellipticity: EllipticityPair
    coeff: np.ndarray | None = None
    parts: tuple = ()
    func: object = None
    offset: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not (1 <= self.dim <= 3):
            raise ValueError("dim must be 1..3")
        if self.kind == "linear":
            if self.coeff is None:
                raise ValueError("linear kind requires coeff")
            object.__setattr__(self, "coeff", as_sym_matrix(self.coeff, self.dim))
        if self.kind == "bellman_min":
            if not self.parts:
                raise ValueError("bellman_min requires at least one part")
            norm = tuple((as_sym_matrix(C, self.dim), float(c)) for C, c in self.parts)
            object.__setattr__(self, "parts", norm)
        if self.kind == "custom" and not callable(self.func):
            raise ValueError("custom kind requires a callable")


def pucci_plus_spec(d: int, lam: float, Lam: float, offset: float = 0.0) -> OperatorSpec:
    return OperatorSpec("pucci_plus", d, EllipticityPair(lam, Lam), offset=offset)


def pucci_minus_spec(d: int, lam: float, Lam: float, offset: float = 0.0) -> OperatorSpec:
    return OperatorSpec("pucci_minus", d, EllipticityPair(lam, Lam), offset=offset)


def linear_spec(coeff, lam: float | None = None, Lam: float | None = None,
                offset: float = 0.0) -> OperatorSpec:
    C = as_sym_matrix(coeff)
    mu = sym_eigvals(C)
    lam = float(mu[0]) if lam is None else lam
    Lam = float(mu[-1]) if Lam is None else Lam
    return OperatorSpec("linear", C.shape[0], EllipticityPair(lam, Lam),
                        coeff=C, offset=offset)


def eval_operator(spec: OperatorSpec, M) -> float:
    """Evaluate F(M) for an operator specification."""
    A = as_sym_matrix(M, spec.dim)
    if spec.shift != 0.0:
        A = A + spec.shift * np.eye(spec.dim)
    if spec.kind == "pucci_plus":
        base = pucci_plus(spec.ellipticity, A)
    elif spec.kind == "pucci_minus":
        base = pucci_minus(spec.ellipticity, A)
    elif spec.kind == "linear":
        base = -float(np.trace(spec.coeff @ A))
    elif spec.kind == "bellman_min":
        base = min(-float(np.trace(C @ A)) + c for C, c in spec.parts)
    else:
        base = float(spec.func(A))
    return base + spec.offset


@dataclass
class EllipticityReport:
    ok: bool
    worst_margin: float
    witness: tuple | None
    samples: int
    df_modulus_estimate: float


def verify_ellipticity(spec: OperatorSpec, n_samples: int = 200, rng=None,
                       tol: float = 1e-9) -> EllipticityReport:
    """Sampled check of the extremal-operator sandwich

        pucci_minus(M - N) <= F(M) - F(N) <= pucci_plus(M - N)

    against the spec's declared ellipticity pair.  The worst signed
    violation and a witness pair are reported.  A crude finite-difference
    estimate of the derivative modulus is attached for information only.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    d = spec.dim
    e = spec.ellipticity
    worst = -np.inf
    witness = None
    for _ in range(n_samples):
        M = rng.standard_normal((d, d))
        M = 0.5 * (M + M.T)
        N = rng.standard_normal((d, d))
        N = 0.5 * (N + N.T)
        diff = eval_operator(spec, M) - eval_operator(spec, N)
        lo = pucci_minus(e, M - N)
        hi = pucci_plus(e, M - N)
        margin = max(lo - diff, diff - hi)
        if margin > worst:
            worst = margin
            witness = (M, N)
    # derivative-modulus probe (informational)
    dmod = 0.0
    hstep = 1e-5
    for _ in range(16):
        M = rng.standard_normal((d, d))
        M = 0.5 * (M + M.T)
        N = M + 0.5 * rng.standard_normal() * np.eye(d)
        E = rng.standard_normal((d, d))
        E = 0.5 * (E + E.T)
        E /= max(np.linalg.norm(E), 1e-300)
        dm = (eval_operator(spec, M + hstep * E) - eval_operator(spec, M - hstep * E)) / (2 * hstep)
        dn = (eval_operator(spec, N + hstep * E) - eval_operator(spec, N - hstep * E)) / (2 * hstep)
        sep = float(np.linalg.norm(M - N))
        if sep > 1e-8:
            dmod = max(dmod, abs(dm - dn) / sep)
    return EllipticityReport(ok=(worst <= tol), worst_margin=float(worst),
                             witness=witness, samples=n_samples,
                             df_modulus_estimate=float(dmod))


@dataclass
class NormalizedProblem:
    a: float
    spec: OperatorSpec
    g_origin: float


def normalize_problem(spec: OperatorSpec, g_origin: float = 0.0,
                      tol: float = 1e-12) -> NormalizedProblem:
    """Shift the operator so the normalized F vanishes on the zero matrix.

    Finds the unique a with F(a I) = 0 (F is strictly decreasing along
    multiples of the identity, with |a| <= |F(0)| / (lam d)) and returns
    the spec with the shift folded in, i.e. Fhat(M) = F(M + a I).  The
    companion substitutions for a solution are u -> u - t * g_origin
    (removing the source at the origin) and u -> u - a |x|^2 / 2.
    """
    d = spec.dim
    lam = spec.ellipticity.lam
    Z = np.zeros((d, d))
    I = np.eye(d)
    f0 = eval_operator(spec, Z)
    if abs(f0) <= tol:
        return NormalizedProblem(0.0, spec, g_origin)
    bound = abs(f0) / (lam * d)
    lo, hi = -bound * (1 + 1e-9) - tol, bound * (1 + 1e-9) + tol
    flo = eval_operator(spec, lo * I)
    fhi = eval_operator(spec, hi * I)
    if not (flo >= -tol and fhi <= tol):
        raise ValueError("operator violates the ellipticity bracket for F(aI)=0")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = eval_operator(spec, mid * I)
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    a = 0.5 * (lo + hi)
    return NormalizedProblem(a, replace(spec, shift=spec.shift + a), g_origin)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def spec_to_dict(spec: OperatorSpec) -> dict:
    if spec.kind == "custom":
        raise ValueError("custom operators are not serializable")
    out = {
        "kind": spec.kind,
        "dim": spec.dim,
        "lam": spec.ellipticity.lam,
        "Lam": spec.ellipticity.Lam,
        "offset": spec.offset,
        "shift": spec.shift,
    }
    if spec.kind == "linear":
        out["coeff"] = spec.coeff.tolist()
    if spec.kind == "bellman_min":
        out["parts"] = [{"coeff": C.tolist(), "offset": c} for C, c in spec.parts]
    return out


def spec_from_dict(data: dict) -> OperatorSpec:
    kind = data["kind"]
    e = EllipticityPair(float(data["lam"]), float(data["Lam"]))
    kwargs = dict(offset=float(data.get("offset", 0.0)), shift=float(data.get("shift", 0.0)))
    if kind == "linear":
        return OperatorSpec("linear", int(data["dim"]), e, coeff=np.array(data["coeff"]), **kwargs)
    if kind == "bellman_min":
        parts = tuple((np.array(p["coeff"]), float(p.get("offset", 0.0))) for p in data["parts"])
        return OperatorSpec("bellman_min", int(data["dim"]), e, parts=parts, **kwargs)
    return OperatorSpec(kind, int(data["dim"]), e, **kwargs)


def spec_to_json(spec: OperatorSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def spec_from_json(text: str) -> OperatorSpec:
    return spec_from_dict(json.loads(text))
