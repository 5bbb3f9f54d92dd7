"""Box-counting dimension with parabolic scaling, and a singular-set proxy.

Covers use grid-aligned boxes of spatial side r and temporal depth r^2,
mirroring the cylinder families of the parabolic Hausdorff measure, so
the estimates are box-dimension flavored upper bounds, not true
Hausdorff values, and reports label them as such.  The singular set of
a cubic-error field collects base nodes around which the field exceeds
the flatness threshold delta/r on a whole sub-cylinder, the
contrapositive of the threshold criterion for second-order expandability
nearby.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import SpaceTimePoint
from .regularity import PsiField


@dataclass
class PointSet:
    """Finite candidate set in space-time: rows (x..., t)."""

    points: np.ndarray
    d: int

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            pts = pts.reshape(0, self.d + 1)
        if pts.shape[1] != self.d + 1:
            raise ValueError("points must have d+1 columns (x..., t)")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def as_space_time(self) -> list[SpaceTimePoint]:
        return [SpaceTimePoint(row[:-1], float(row[-1])) for row in self.points]


@dataclass
class CoverReport:
    radii: np.ndarray
    counts: np.ndarray
    dimension: float | None
    degenerate: bool
    classical_band: tuple | None
    masses: dict

    def to_json(self) -> str:
        return json.dumps({
            "estimator": "parabolic box dimension (upper-bound flavor)",
            "radii": self.radii.tolist(),
            "counts": self.counts.tolist(),
            "dimension": self.dimension,
            "degenerate": self.degenerate,
            "classical_band": list(self.classical_band) if self.classical_band else None,
            "masses": {f"{s:g}": v for s, v in self.masses.items()},
        }, indent=2)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.radii, self.counts]),
                   delimiter=",", header="r,count", comments="", fmt="%.17g")


def singular_set(psi: PsiField, delta: float, r_list) -> dict[float, PointSet]:
    """Nodes whose whole r-neighborhood keeps the cubic error above
    delta/r, one nested PointSet per radius.

    A base (y, s0) enters the r-set when every field node inside
    Q_r(y, s0) (spatial ball of radius r, times (s0 - r^2, s0]) has
    value above delta/r; a single flat node nearby excludes it.
    """
    if not (delta > 0):
        raise ValueError("delta must be positive")
    r_list = sorted(set(float(r) for r in r_list), reverse=True)
    if any(not (0 < r < 0.05) for r in r_list):
        raise ValueError("radii must lie in (0, 1/20)")
    xs, ts = psi.base_coords()
    vals = psi.values
    out = {}
    for r in r_list:
        thresh = delta / r
        members = []
        for i in range(xs.shape[0]):
            gap = xs - xs[i][None, :]
            near = (np.einsum("ij,ij->i", gap, gap) <= r * r + 1e-15)
            near &= (ts <= ts[i] + 1e-15) & (ts > ts[i] - r * r - 1e-15)
            if np.all(vals[near] > thresh):
                members.append(np.concatenate([xs[i], [ts[i]]]))
        out[r] = PointSet(np.array(members) if members else
                          np.empty((0, psi.grid.d + 1)), psi.grid.d)
    return out


def _box_count(points: np.ndarray, d: int, r: float) -> int:
    """Occupied grid-aligned boxes: spatial side r, temporal depth r^2."""
    cells = np.empty((points.shape[0], d + 1), dtype=np.int64)
    cells[:, :d] = np.floor(points[:, :d] / r + 1e-12)
    cells[:, d] = np.floor(points[:, d] / (r * r) + 1e-12)
    return np.unique(cells, axis=0).shape[0]


def classical_band(parabolic_dim: float, d: int) -> tuple[float, float]:
    """Classical-dimension interval implied by 2H - d <= H_par <= H + 1."""
    return (max(0.0, parabolic_dim - 1.0), (parabolic_dim + d) / 2.0)


def box_dimension(E: PointSet, r_list, mass_exponents=(1.0, 2.0, 3.0)) -> CoverReport:
    """Slope of log N(r) against log(1/r) over grid-aligned covers.

    Also tabulates the cover masses ``N(r) r^s`` for a few exponents and
    the classical-dimension band implied by the parabolic estimate.  A
    flat count table is flagged degenerate and left unfitted.
    """
    if len(E) < 1:
        raise ValueError("point set is empty")
    rs = np.array(sorted(set(float(r) for r in r_list), reverse=True))
    if rs.size < 3:
        raise ValueError("need at least 3 radii")
    counts = np.array([_box_count(E.points, E.d, r) for r in rs], dtype=np.float64)
    masses = {s: [float(n * r**s) for r, n in zip(rs, counts)]
              for s in mass_exponents}
    if np.ptp(np.log(counts)) < 1e-12:
        return CoverReport(rs, counts, None, True, None, masses)
    slope = np.polyfit(np.log(1.0 / rs), np.log(counts), 1)[0]
    dim = float(slope)
    return CoverReport(rs, counts, dim, False, classical_band(dim, E.d), masses)
