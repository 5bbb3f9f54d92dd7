"""Timing comparison of the compiled kernels against the numpy fallback.

Run twice: once normally and once with PARAREG_NO_NUMBA=1.  Results are
printed as one row per kernel; pass --json for machine-readable output.
The work sizes mirror a realistic analysis pass (one opening field and
one cubic-error field on a mid-size grid, plus a contact sweep).
"""

import argparse
import json
import time

import numpy as np

from parareg import _kernels, operators, regularity, solver


def timed(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=65)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    spec = operators.pucci_minus_spec(1, 1.0, 2.0)
    grid = solver.Grid.for_problem(1, 1.0, args.nx, 2.0)
    sol = solver.cusp_space(1, 0.5)
    prob = solver.problem_from_exact(sol, spec, grid)

    u = solver.solve(prob)  # includes kernel warmup on the compiled path

    rows = {}
    rows["impl"] = _kernels.impl_name()
    rows["grid"] = {"Nx": grid.Nx, "nt": grid.nt}
    rows["solve"] = timed(lambda: solver.solve(prob))
    rows["theta_field"] = timed(lambda: regularity.theta_field(
        u, base_stride=8, time_stride=max(grid.nt // 8, 1), scan_stride=4),
        repeat=2)
    rows["psi_field"] = timed(lambda: regularity.psi_field(
        u, base_stride=8, time_stride=max(grid.nt // 8, 1), scan_stride=4),
        repeat=2)
    rows["a_kappa_set"] = timed(lambda: regularity.a_kappa_set(u, 4.0, vertex_grid=9),
                                repeat=2)
    rows["inf_convolution"] = timed(lambda: regularity.inf_convolution(u, 0.25))

    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        print(f"kernel implementation: {rows['impl']}  "
              f"(grid {grid.Nx} x {grid.nt})")
        for key in ("solve", "theta_field", "psi_field", "a_kappa_set",
                    "inf_convolution"):
            print(f"  {key:<16} {rows[key] * 1e3:9.2f} ms")


if __name__ == "__main__":
    main()
