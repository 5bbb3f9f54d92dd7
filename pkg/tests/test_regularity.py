"""Pointwise openings, cubic errors, contact sets, ABP, decay fits."""

import math

import numpy as np
import pytest

from parareg import operators as O
from parareg import regularity as R
from parareg import solver as S
from parareg.geometry import SpaceTimePoint

from conftest import heat_setup, make_grid, solve_exact

ORIGIN = SpaceTimePoint(np.array([0.0]), 0.0)


def field_1d(fn, Nx=33, rho=1.0):
    grid = make_grid(1, rho, Nx)
    return S.GridFunction.from_callable(grid, fn)


class TestTheta:
    def test_convex_quadratic(self):
        a = 1.7
        u = field_1d(lambda xs, ts: 0.5 * a * xs[:, 0] ** 2)
        assert R.theta_lower(u, None, ORIGIN).value == pytest.approx(0.0, abs=1e-14)
        assert R.theta_upper(u, None, ORIGIN).value == pytest.approx(a, rel=1e-12)

    def test_concave_quadratic(self):
        a = 1.7
        u = field_1d(lambda xs, ts: -0.5 * a * xs[:, 0] ** 2)
        assert R.theta_lower(u, None, ORIGIN).value == pytest.approx(a, rel=1e-12)

    def test_time_ramp(self):
        u = field_1d(lambda xs, ts: ts.astype(float))
        assert R.theta_lower(u, None, ORIGIN).value == pytest.approx(1.0, rel=1e-14)

    def test_affine(self):
        u = field_1d(lambda xs, ts: 2.0 * xs[:, 0] + 0.3)
        assert R.theta_lower(u, None, ORIGIN).value == 0.0
        assert R.theta_upper(u, None, ORIGIN).value == 0.0

    def test_mirror_identity(self, rng):
        grid = make_grid(1, 1.0, 17)
        for _ in range(10):
            vals = rng.normal(size=(grid.nt, 17))
            u = S.GridFunction(grid, vals)
            neg = S.GridFunction(grid, -vals)
            up = R.theta_upper(u, None, ORIGIN)
            lo = R.theta_lower(neg, None, ORIGIN)
            assert up.value == lo.value

    def test_affine_invariance(self, rng):
        _, u, _ = heat_setup(Nx=17)
        base = R.theta_lower(u, None, ORIGIN).value
        for _ in range(5):
            c, q = rng.normal(size=2)
            shifted = S.GridFunction(
                u.grid, u.values + c + q * u.grid.coords[:, 0].reshape(1, -1))
            got = R.theta_lower(shifted, None, ORIGIN).value
            assert got == pytest.approx(base, abs=1e-10)

    def test_positive_homogeneity(self):
        _, u, _ = heat_setup(Nx=17)
        v0 = R.theta_upper(u, None, ORIGIN).value
        for c in (0.5, 3.0):
            scaled = S.GridFunction(u.grid, c * u.values)
            assert R.theta_upper(scaled, None, ORIGIN).value == pytest.approx(
                c * v0, rel=1e-12)

    def test_brute_refines_gradient_certificate(self):
        _, u, _ = heat_setup(Nx=17)
        base = SpaceTimePoint(np.array([0.25]), 0.0)
        grad = R.theta_lower(u, None, base).value
        brute = R.theta_lower(u, None, base, mode="brute").value
        assert brute <= grad + 1e-14
        assert grad - brute <= 0.05 * max(grad, 1e-12)

    def test_field_matches_pointwise(self):
        _, u, _ = heat_setup(Nx=17)
        f = R.theta_field(u, base_stride=4, time_stride=50)
        for k in range(f.base_it.size):
            it, js = int(f.base_it[k]), int(f.base_js[k])
            if it == 0:
                continue
            base = SpaceTimePoint(u.grid.coords[js], float(u.grid.times[it]))
            assert f.lower[k] == pytest.approx(
                R.theta_lower(u, None, base).value, abs=1e-13)
        assert np.array_equal(f.theta, np.maximum(f.lower, f.upper))


class TestPsi:
    def test_quadratic_flat(self):
        # dyadic coefficients on a dyadic grid: every value, stencil and
        # difference is exact, so the certificate must be exactly zero
        grid = S.Grid(1, 1.0, 33, 1025)
        u = S.GridFunction.from_callable(
            grid, lambda xs, ts: 0.25 * ts + 0.25 * xs[:, 0]
            + 0.75 * xs[:, 0] ** 2 + 0.125)
        cert = R.psi(u, None, ORIGIN)
        assert cert.value <= 1e-12

    def test_quadratic_flat_generic_coefficients(self):
        # non-representable coefficients leave value-storage noise that the
        # denominator dt^{3/2} amplifies; it stays orders below any signal
        u = field_1d(lambda xs, ts: 0.3 * ts + 0.2 * xs[:, 0]
                     + 0.7 * xs[:, 0] ** 2)
        assert R.psi(u, None, ORIGIN).value <= 1e-10

    def test_cubic_space_bias(self):
        """The stencil Hessian at the kink is 2 dx, which shaves the ratio
        at the domain edge to exactly 1 - dx/rho."""
        u = field_1d(lambda xs, ts: np.abs(xs[:, 0]) ** 3)
        cert = R.psi(u, None, ORIGIN)
        dx = u.grid.dx
        assert cert.value == pytest.approx(6.0 * (1.0 - dx), abs=1e-9)
        brute = R.psi(u, None, ORIGIN, mode="brute")
        assert brute.value <= cert.value + 1e-12
        assert abs(brute.value - 6.0) <= 13.0 * dx

    def test_cubic_time(self):
        u = field_1d(lambda xs, ts: np.abs(ts) ** 1.5)
        cert = R.psi(u, None, ORIGIN)
        assert cert.value == pytest.approx(6.0 * (1.0 - math.sqrt(u.grid.dt)),
                                           abs=1e-9)

    def test_supplied_expansion(self):
        M = np.array([[1.4]])
        u = field_1d(lambda xs, ts: 0.5 * 1.4 * xs[:, 0] ** 2 - 0.3 * ts)
        exp = R.QuadraticExpansion(base=ORIGIN, value=0.0, b=-0.3,
                                   p=np.zeros(1), M=M)
        assert R.psi(u, None, ORIGIN, expansion=exp).value <= 1e-12

    def test_bottom_face_rejected(self):
        u = field_1d(lambda xs, ts: np.zeros(xs.shape[0]))
        with pytest.raises(ValueError):
            R.psi(u, None, SpaceTimePoint(np.array([0.0]), -1.0))

    def test_field_matches_pointwise(self):
        _, u, _ = heat_setup(Nx=17)
        f = R.psi_field(u, base_stride=4, time_stride=60)
        for k in range(f.base_it.size):
            it, js = int(f.base_it[k]), int(f.base_js[k])
            if it == 0:
                continue
            base = SpaceTimePoint(u.grid.coords[js], float(u.grid.times[it]))
            assert f.values[k] == pytest.approx(
                R.psi(u, None, base).value, abs=1e-12)


class TestKappaSets:
    def test_flat_function_members(self):
        grid = make_grid(1, 1.0, 17)
        u = S.GridFunction.from_callable(grid, lambda xs, ts: np.zeros(xs.shape[0]))
        for js in (3, 8, 12):
            m = R.a_kappa_membership(u, 1.0, vertex=[grid.coords[js, 0]])
            assert m[:, js].all()

    def test_monotone_in_kappa(self):
        _, u, _ = heat_setup(Nx=17)
        small = R.a_kappa_set(u, 0.5, vertex_grid=9)
        big = R.a_kappa_set(u, 2.0, vertex_grid=9)
        assert np.all(~small.mask | big.mask)
        assert small.measure <= big.measure

    def test_containment_in_theta_sublevel(self):
        """Membership slack delta admits openings up to kappa + delta/den
        at the nearest scan node (den = min(dt, dx^2/2)), so scaling the
        membership tolerance to the containment tolerance makes the
        inclusion a theorem rather than a sampling accident."""
        _, u, _ = heat_setup(Nx=17)
        g = u.grid
        kappa, tol = 1.0, 0.05
        mem_tol = 0.99 * tol * kappa * min(g.dt, 0.5 * g.dx**2)
        f = R.a_kappa_set(u, kappa, vertex_grid=9, tol=mem_tol)
        assert f.mask.any()
        rep = R.kappa_containment(u, f, tol=tol, max_checks=150)
        assert rep["ok"], rep
        assert rep["worst_ratio"] <= 1.0 + rep["tol"]

    def test_witness_access(self):
        grid = make_grid(1, 1.0, 17)
        u = S.GridFunction.from_callable(grid, lambda xs, ts: np.zeros(xs.shape[0]))
        f = R.a_kappa_set(u, 1.0, vertex_grid=17)
        its, jss = np.nonzero(f.mask)
        w = f.witness_vertex(int(its[0]), int(jss[0]))
        assert w.shape == (1,)
        off = np.nonzero(~f.mask)
        if off[0].size:
            with pytest.raises(KeyError):
                f.witness_vertex(int(off[0][0]), int(off[1][0]))

    def test_rejects_bad_kappa(self):
        _, u, _ = heat_setup(Nx=9)
        with pytest.raises(ValueError):
            R.a_kappa_set(u, 0.0)


class TestInfConvolution:
    def test_constant_unchanged(self):
        u = field_1d(lambda xs, ts: np.full(xs.shape[0], 0.4), Nx=17)
        v = R.inf_convolution(u, 0.3)
        assert np.allclose(v.values, 0.4, atol=1e-14)

    def test_absolute_value_formula(self):
        # eps/4 = 2 dx, so the analytic minimizers sit on grid nodes and
        # the discrete envelope reproduces the closed form exactly
        u = field_1d(lambda xs, ts: np.abs(xs[:, 0]), Nx=33)
        eps = 0.5
        v = R.inf_convolution(u, eps)
        x = u.grid.coords[:, 0]
        expect = np.where(np.abs(x) >= eps / 4, np.abs(x) - eps / 8,
                          2.0 * x**2 / eps)
        assert np.allclose(v.values, expect[None, :], atol=1e-12)

    def test_below_and_monotone(self):
        _, u, _ = heat_setup(Nx=17)
        v1 = R.inf_convolution(u, 0.4)
        v2 = R.inf_convolution(u, 0.2)
        assert np.all(v1.values <= u.values + 1e-12)
        assert np.all(v2.values <= u.values + 1e-12)
        assert np.all(v1.values <= v2.values + 1e-12)

    def test_semiconcavity(self):
        _, u, _ = heat_setup(Nx=17, amp=5.0)
        eps = 0.3
        v = R.inf_convolution(u, eps).values
        second = (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / u.grid.dx**2
        assert second.max() <= 4.0 / eps + 1e-9

    def test_matches_brute(self, rng):
        grid = make_grid(1, 0.5, 9)
        u = S.GridFunction(grid, rng.normal(size=(grid.nt, 9)))
        fast = R.inf_convolution(u, 0.7)
        slow = R.inf_convolution_brute(u, 0.7)
        assert np.allclose(fast.values, slow.values, atol=1e-12)


class TestVertexMap:
    def test_flat_is_identity(self):
        grid = make_grid(1, 1.0, 17)
        u = S.GridFunction.from_callable(grid, lambda xs, ts: np.zeros(xs.shape[0]))
        pts = [(5, 8), (3, 4)]
        out = R.vertex_map(u, 2.0, pts)
        for (it, js), q in zip(pts, out):
            assert np.allclose(q.x, grid.coords[js])
            assert q.t == pytest.approx(grid.times[it])

    def test_quadratic_doubles(self):
        a = 1.0
        u = field_1d(lambda xs, ts: 0.5 * a * xs[:, 0] ** 2, Nx=33)
        grid = u.grid
        js = 24  # interior node, z = coords[js]
        z = grid.coords[js, 0]
        (q,) = R.vertex_map(u, a, [(10, js)])
        assert q.x[0] == pytest.approx(2.0 * z, rel=1e-12)
        assert q.t == pytest.approx(grid.times[10] - z**2, rel=1e-10)

    def test_rejects_bad_opening(self):
        u = field_1d(lambda xs, ts: np.zeros(xs.shape[0]), Nx=9)
        with pytest.raises(ValueError):
            R.vertex_map(u, -1.0, [(1, 1)])


class TestAbp:
    def test_flat_field_slack(self):
        grid = make_grid(1, 1.0, 17)
        u = S.GridFunction.from_callable(grid, lambda xs, ts: np.zeros(xs.shape[0]))
        rep = R.abp_check(u, O.EllipticityPair(1.0, 1.0), a=1.0, L=1.0,
                          vertices=grid.coords[[8]], vertex_cell_volume=grid.dx)
        assert rep.ok
        assert rep.v_measure <= rep.bound
        assert rep.constant == pytest.approx(9.0)

    def test_constant_monotone_in_a(self):
        u = field_1d(lambda xs, ts: -0.5 * xs[:, 0] ** 2, Nx=17)
        grid = u.grid
        reps = [R.abp_check(u, O.EllipticityPair(1.0, 1.0), a=a, L=0.5,
                            vertices=grid.coords[4:13],
                            vertex_cell_volume=grid.dx)
                for a in (1.0, 2.0, 4.0)]
        assert all(r.ok for r in reps)
        consts = [r.constant for r in reps]
        assert consts == sorted(consts, reverse=True)

    def test_supersolution_guard(self):
        u = field_1d(lambda xs, ts: 2.5 * xs[:, 0] ** 2, Nx=17)
        with pytest.raises(ValueError):
            R.abp_check(u, O.EllipticityPair(1.0, 1.0), a=1.0, L=0.0,
                        vertices=u.grid.coords[[8]],
                        vertex_cell_volume=u.grid.dx)


class TestAssemble:
    def setup_method(self):
        M = np.array([[1.5]])
        self.M = M
        self.spec = O.pucci_plus_spec(1, 1.0, 2.0)
        self.g_const = -0.7 + O.eval_operator(self.spec, M)
        sol = S.quadratic(M, p=[0.3], b=-0.7, c=0.2)
        grid = make_grid(1, 1.0, 33, Lam=2.0)
        self.u, _ = solve_exact(sol, self.spec, grid, g=self.g_const)

    def certs(self, base):
        (ux,) = S.gradient_fields(self.u)
        return [R.theta_lower(ux, None, base)]

    def test_quadratic_recovered(self):
        exp = R.assemble_expansion(self.u, ORIGIN, self.certs(ORIGIN),
                                   self.spec, self.g_const)
        assert exp.M[0, 0] == pytest.approx(1.5, abs=1e-9)
        assert exp.b == pytest.approx(-0.7, abs=1e-9)
        assert exp.p[0] == pytest.approx(0.3, abs=1e-9)
        assert R.psi(self.u, None, ORIGIN, expansion=exp).value <= 1e-7

    def test_time_slope_growth_bound(self):
        exp = R.assemble_expansion(self.u, ORIGIN, self.certs(ORIGIN),
                                   self.spec, self.g_const)
        d, Lam = 1, 2.0
        nrm = np.abs(np.linalg.eigvalsh(exp.M)).max()
        assert abs(exp.b) <= d * Lam * nrm + abs(self.g_const) + 1e-12

    def test_certificate_count_checked(self):
        with pytest.raises(ValueError):
            R.assemble_expansion(self.u, ORIGIN, [], self.spec, 0.0)


class TestDirectional:
    def test_heat_solution(self):
        _, u, _ = heat_setup(Nx=17)
        rep = R.directional_derivative_check(u, [1.0], 0.0,
                                             O.EllipticityPair(1.0, 1.0))
        assert rep.ok, rep

    def test_solved_extremal(self):
        grid = make_grid(1, 1.0, 17, Lam=2.0)
        sol = S.heat_mode(1, 1.0)
        u, _ = solve_exact(sol, O.pucci_minus_spec(1, 1.0, 2.0), grid)
        rep = R.directional_derivative_check(u, [1.0], 0.0,
                                             O.EllipticityPair(1.0, 2.0))
        assert rep.ok, rep

    def test_quadratic_affine_derivative(self):
        u = field_1d(lambda xs, ts: 0.5 * xs[:, 0] ** 2 - ts, Nx=17)
        rep = R.directional_derivative_check(u, [1.0], 1.0,
                                             O.EllipticityPair(1.0, 1.0))
        assert rep.ok

    def test_rejects_non_lattice_direction(self):
        _, u, _ = heat_setup(Nx=9)
        with pytest.raises(ValueError):
            R.directional_derivative_check(u, [0.6], 0.0,
                                           O.EllipticityPair(1.0, 1.0))


class TestSurvival:
    def test_exact_power_law(self):
        vals = np.array([0.5] * 8 + [1.5] * 4 + [3.0] * 2 + [6.0, 12.0])
        fit = R.survival_and_fit(vals, [1.0, 2.0, 4.0, 8.0], cell_volume=1.0)
        assert not fit.refused
        assert fit.epsilon_hat == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(fit.survival, [8.0, 4.0, 2.0, 1.0])

    def test_constant_refused(self):
        fit = R.survival_and_fit(np.full(50, 3.0), [1.0, 2.0], cell_volume=1.0)
        assert fit.refused

    def test_sparse_refused(self):
        fit = R.survival_and_fit(np.array([0.1, 0.2]), [1.0, 2.0, 4.0],
                                 cell_volume=1.0)
        assert fit.refused
        assert "nonzero" in fit.reason

    def test_domination_predicate(self):
        fit = R.SurvivalFit(np.array([1.0, 2.0, 4.0]),
                            np.array([0.5, 0.25, 0.125]),
                            1.0, 0.5, False, "")
        assert R.survival_dominated(fit, C=0.5, eps=1.0, kappa0=1.0)
        assert not R.survival_dominated(fit, C=0.4, eps=1.1, kappa0=1.0)
        # bound only applies above kappa0
        assert R.survival_dominated(fit, C=1e-9, eps=1.0, kappa0=100.0)

    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            R.survival_and_fit(np.ones(5), [0.0, 1.0], cell_volume=1.0)


class TestRescaled:
    def test_cubic_remainder(self):
        q0 = R.QuadraticExpansion(base=ORIGIN, value=0.0, b=0.0,
                                  p=np.zeros(1), M=np.zeros((1, 1)))
        fn = lambda xs, ts: np.abs(np.atleast_2d(xs)[:, 0]) ** 3
        for r in (0.01, 0.003):
            got = R.rescaled_remainder(fn, q0, r)
            assert got == pytest.approx(4.0 * r, rel=1e-12)
            # psi certificate of |y|^3 is 6, i.e. delta = 6 r at scale r;
            # the remainder must sit under (4/3) delta
            assert got <= (4.0 / 3.0) * (6.0 * r) + 1e-15


class TestExport:
    def test_field_csv(self, tmp_path):
        _, u, _ = heat_setup(Nx=9)
        f = R.theta_field(u, base_stride=2, time_stride=80)
        path = tmp_path / "theta.csv"
        R.field_to_csv(f, path)
        assert path.read_text().count("\n") == f.base_it.size + 1

    def test_mask_roundtrip(self):
        _, u, _ = heat_setup(Nx=9)
        f = R.a_kappa_set(u, 1.0, vertex_grid=5)
        gf = R.mask_to_gridfunction(f)
        assert gf.values.shape == (u.grid.nt,) + u.grid.spatial_shape
        assert set(np.unique(gf.values)) <= {0.0, 1.0}
