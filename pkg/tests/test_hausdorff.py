"""Parabolic box-counting and the singular-set proxy."""

import json

import numpy as np
import pytest

from parareg import hausdorff as H
from parareg import regularity as R
from parareg import solver as S


def synthetic_psi_field(values_by_node):
    """PsiField over a 1-d grid with prescribed values; dx = 0.05,
    dt = 0.0125, so radii below 0.05 see one spatial column at a time."""
    grid = S.Grid(1, 0.5, 21, 21)
    nt, ns = 21, 21
    base_it = np.repeat(np.arange(nt), ns)
    base_js = np.tile(np.arange(ns), nt)
    xs = grid.coords[base_js][:, 0]
    ts = grid.times[base_it]
    vals = values_by_node(xs, ts)
    n = vals.size
    return R.PsiField(grid, base_it, base_js, vals,
                      np.zeros(n), np.zeros((n, 1)), np.zeros((n, 1, 1)))


class TestPointSet:
    def test_shape_checks(self):
        ps = H.PointSet(np.array([[0.1, 0.2], [0.3, -0.4]]), 1)
        assert len(ps) == 2
        with pytest.raises(ValueError):
            H.PointSet(np.ones((3, 3)), 1)

    def test_empty_allowed(self):
        ps = H.PointSet(np.empty((0, 2)), 1)
        assert len(ps) == 0

    def test_as_space_time(self):
        ps = H.PointSet(np.array([[0.5, -0.25]]), 1)
        pt = ps.as_space_time()[0]
        assert pt.x[0] == 0.5 and pt.t == -0.25


class TestSingularSet:
    def test_flat_field_gives_empty_sets(self):
        pf = synthetic_psi_field(lambda xs, ts: np.zeros_like(xs))
        sets = H.singular_set(pf, delta=1.0, r_list=[0.04, 0.02])
        assert all(len(ps) == 0 for ps in sets.values())

    def test_quadratic_solution_gives_empty_sets(self):
        grid = S.Grid(1, 0.5, 17, 17)
        u = S.GridFunction.from_callable(
            grid, lambda xs, ts: 0.3 * ts + xs[:, 0] ** 2)
        pf = R.psi_field(u, None)
        sets = H.singular_set(pf, delta=1.0, r_list=[0.04])
        assert len(sets[0.04]) == 0

    def test_spike_column_is_recovered(self):
        col = 0.2  # a grid coordinate (multiple of dx = 0.05)
        pf = synthetic_psi_field(
            lambda xs, ts: np.where(np.abs(xs - col) < 1e-12, 1e6, 0.0))
        sets = H.singular_set(pf, delta=1.0, r_list=[0.03])
        pts = sets[0.03].points
        assert len(pts) == 21
        assert np.all(np.abs(pts[:, 0] - col) < 1e-12)

    def test_monotone_in_delta(self):
        pf = synthetic_psi_field(lambda xs, ts: np.full_like(xs, 50.0))
        lo = H.singular_set(pf, delta=1.0, r_list=[0.03])[0.03]
        hi = H.singular_set(pf, delta=2.0, r_list=[0.03])[0.03]
        assert len(lo) == 21 * 21  # threshold 33.3 < 50: every node
        assert len(hi) == 0  # threshold 66.7 > 50

    def test_input_validation(self):
        pf = synthetic_psi_field(lambda xs, ts: np.zeros_like(xs))
        with pytest.raises(ValueError):
            H.singular_set(pf, delta=-1.0, r_list=[0.03])
        with pytest.raises(ValueError):
            H.singular_set(pf, delta=1.0, r_list=[0.05])
        with pytest.raises(ValueError):
            H.singular_set(pf, delta=1.0, r_list=[0.0])


class TestBoxDimension:
    def test_time_segment_counts_like_dimension_two(self, rng):
        # temporal boxes have depth r^2, so a pure time segment needs
        # ~1/r^2 of them
        n = 4000
        pts = np.column_stack([np.zeros(n), rng.uniform(0.0, 1.0, n)])
        rep = H.box_dimension(H.PointSet(pts, 1), [0.2, 0.1, 0.05])
        assert abs(rep.dimension - 2.0) < 0.2

    def test_spatial_slice_counts_like_d(self, rng):
        n = 20000
        pts = np.column_stack([rng.uniform(0.0, 1.0, (n, 2)), np.zeros(n)])
        rep = H.box_dimension(H.PointSet(pts, 2), [0.2, 0.1, 0.05])
        assert abs(rep.dimension - 2.0) < 0.2

    def test_full_cylinder_counts_like_d_plus_two(self, rng):
        n = 100000
        pts = np.column_stack([rng.uniform(0.0, 1.0, n),
                               rng.uniform(0.0, 1.0, n)])
        rep = H.box_dimension(H.PointSet(pts, 1), [0.2, 0.1, 0.05])
        assert abs(rep.dimension - 3.0) < 0.2
        lo, hi = rep.classical_band
        assert lo == max(0.0, rep.dimension - 1.0)
        assert hi == (rep.dimension + 1.0) / 2.0

    def test_single_point_is_degenerate(self):
        rep = H.box_dimension(H.PointSet(np.array([[0.3, 0.4]]), 1),
                              [0.2, 0.1, 0.05])
        assert rep.degenerate
        assert rep.dimension is None
        assert rep.classical_band is None

    def test_masses_table(self, rng):
        n = 500
        pts = np.column_stack([np.zeros(n), rng.uniform(0.0, 1.0, n)])
        rep = H.box_dimension(H.PointSet(pts, 1), [0.2, 0.1, 0.05])
        assert set(rep.masses) == {1.0, 2.0, 3.0}
        want = rep.counts[0] * rep.radii[0] ** 2.0
        assert rep.masses[2.0][0] == pytest.approx(want, rel=1e-15)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            H.box_dimension(H.PointSet(np.empty((0, 2)), 1), [0.2, 0.1, 0.05])
        with pytest.raises(ValueError):
            H.box_dimension(H.PointSet(np.zeros((1, 2)), 1), [0.2, 0.1])


class TestClassicalBand:
    def test_ambient_band_is_a_point(self):
        assert H.classical_band(3.0, 1) == (2.0, 2.0)
        assert H.classical_band(4.0, 2) == (3.0, 3.0)

    def test_lower_edge_clamps_at_zero(self):
        assert H.classical_band(0.5, 1) == (0.0, 0.75)


class TestReports:
    def test_json(self, rng):
        n = 500
        pts = np.column_stack([np.zeros(n), rng.uniform(0.0, 1.0, n)])
        rep = H.box_dimension(H.PointSet(pts, 1), [0.2, 0.1, 0.05])
        data = json.loads(rep.to_json())
        assert data["radii"] == [0.2, 0.1, 0.05]
        assert len(data["counts"]) == 3
        assert "upper-bound" in data["estimator"]

    def test_csv(self, rng, tmp_path):
        n = 500
        pts = np.column_stack([np.zeros(n), rng.uniform(0.0, 1.0, n)])
        rep = H.box_dimension(H.PointSet(pts, 1), [0.2, 0.1, 0.05])
        path = tmp_path / "cover.csv"
        rep.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "r,count"
        assert len(lines) == 4
