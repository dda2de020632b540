import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from dualorlicz import (
    Case,
    J_rate_identity,
    ProblemSpec,
    RadialPowerDensity,
    SphericalGrid,
    SupportField,
    dual_volume,
    enclosed_volume,
    eta,
    functional_report,
    orlicz_J,
    symmetrize,
)
from dualorlicz.functionals import volume_identity_check

from .conftest import ellipse_h


def ball(n, r, N=64):
    return SupportField(SphericalGrid(n, N), np.full(N, float(r)))


def shoelace(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


random_even = st.tuples(
    st.integers(0, 2**32 - 1), st.sampled_from([2, 3]), st.floats(0.5, 2.0)
)


def random_convex_even(seed, n, scale, N=128):
    g = SphericalGrid(n, N)
    rng = np.random.default_rng(seed)
    eps = rng.uniform(-1, 1, 3) * 0.3 / (np.array([3, 15, 35]) * 3)
    h = np.ones(N) + sum(e * np.cos(2 * (k + 1) * g.theta) for k, e in enumerate(eps))
    return symmetrize(SupportField(g, scale * h))


class TestDualVolume:
    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_disk_area(self, r):
        v = dual_volume(ball(2, r), RadialPowerDensity(2, 2), Case.CASE1)
        assert v == pytest.approx(np.pi * r**2, rel=1e-14)

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_case2_ball(self, r):
        v = dual_volume(ball(2, r), RadialPowerDensity(-1, 2), Case.CASE2)
        assert v == pytest.approx(2 * np.pi / r, rel=1e-14)

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_ball_volume_n3(self, r):
        v = dual_volume(ball(3, r), RadialPowerDensity(3, 3), Case.CASE1)
        assert v == pytest.approx(4 / 3 * np.pi * r**3, rel=1e-12)

    @pytest.mark.parametrize("a,b", [(1.4, 0.8), (2.0, 1.0)])
    def test_ellipse_area(self, a, b):
        g = SphericalGrid(2, 512)
        fld = SupportField(g, ellipse_h(g.theta, a, b))
        assert abs(enclosed_volume(fld) - np.pi * a * b) / (np.pi * a * b) <= 1e-6
        # independent check on the embedded polygon
        assert shoelace(fld.points) == pytest.approx(np.pi * a * b, rel=1e-4)

    @pytest.mark.parametrize("a,c", [(1.2, 0.9), (1.0, 1.5)])
    def test_ellipsoid_volume(self, a, c):
        g = SphericalGrid(3, 512)
        h = np.sqrt(a**2 * np.sin(g.theta) ** 2 + c**2 * np.cos(g.theta) ** 2)
        v = enclosed_volume(SupportField(g, h))
        assert abs(v - 4 / 3 * np.pi * a * a * c) / (4 / 3 * np.pi * a * a * c) <= 1e-6

    def test_ellipse_case2_against_polar_quadrature(self):
        a, b = 1.4, 0.8
        g = SphericalGrid(2, 512)
        fld = SupportField(g, ellipse_h(g.theta, a, b))
        # int over the exterior of |y|^-3 = int_0^2pi dphi / rho(phi)
        inv_rho = lambda phi: np.sqrt(np.cos(phi) ** 2 / a**2 + np.sin(phi) ** 2 / b**2)  # noqa: E731
        oracle, _ = integrate.quad(inv_rho, 0, 2 * np.pi, epsabs=0, epsrel=1e-13)
        v = dual_volume(fld, RadialPowerDensity(-1, 2), Case.CASE2)
        assert v == pytest.approx(oracle, rel=1e-6)

    def test_scale_argument(self, grid2):
        fld = SupportField(grid2, ellipse_h(grid2.theta, 1.4, 0.8))
        dens = RadialPowerDensity(-1.5, 2)
        v = dual_volume(fld, dens, Case.CASE2, scale=2.0)
        assert v == pytest.approx(dual_volume(fld.scaled(2.0), dens, Case.CASE2), rel=1e-13)


class TestEta:
    def test_unit_ball(self):
        spec = ProblemSpec.power_law(SphericalGrid(2, 64), 2, 2)
        e = eta(ball(2, 1.0), spec)
        assert e.value == pytest.approx(1.0, rel=1e-15)
        assert e.numerator == pytest.approx(2 * np.pi, rel=1e-15)
        assert e.denominator == pytest.approx(2 * np.pi, rel=1e-15)

    @pytest.mark.parametrize("r,f0", [(0.5, 2.0), (2.0, 0.25)])
    def test_ball_p_eq_q(self, r, f0):
        spec = ProblemSpec.power_law(SphericalGrid(2, 64), 2, 2, f=f0)
        assert eta(ball(2, r), spec).value == pytest.approx(1 / f0, rel=1e-14)

    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("p,q", [(2, 3), (0.5, 1.5), (-1, -2), (-2, -0.5)])
    def test_ball_general(self, n, p, q):
        r, f0 = 1.7, 1.3
        spec = ProblemSpec.power_law(SphericalGrid(n, 64), p, q, f=f0)
        assert eta(ball(n, r), spec).value == pytest.approx(r ** (q - p) / f0, rel=1e-13)

    @given(data=random_even, s=st.sampled_from([0.5, 2.0]), pq=st.sampled_from([(2, 2), (2, 3), (-1, -1), (-1, -2)]))
    def test_scale_covariance(self, data, s, pq):
        fld = random_convex_even(*data)
        spec = ProblemSpec.power_law(fld.grid, *pq)
        p, q = pq
        e1 = eta(fld, spec).value
        e2 = eta(fld.scaled(s), spec).value
        assert e2 == pytest.approx(s ** (q - p) * e1, rel=1e-10)


class TestJ:
    def test_unit_ball_case1(self):
        spec = ProblemSpec.power_law(SphericalGrid(2, 64), 2, 2)
        assert orlicz_J(ball(2, 1.0), spec) == pytest.approx(np.pi, rel=1e-15)

    def test_ball_case2(self):
        spec = ProblemSpec.power_law(SphericalGrid(2, 64), -1, -1)
        assert orlicz_J(ball(2, 2.0), spec) == pytest.approx(np.pi, rel=1e-15)

    def test_linear_in_f(self, grid2):
        fld = SupportField(grid2, ellipse_h(grid2.theta, 1.4, 0.8))
        f = 1 + 0.3 * np.cos(2 * grid2.theta)
        f = 0.5 * (f + f[grid2.antipode])
        j1 = orlicz_J(fld, ProblemSpec.power_law(grid2, 2, 2, f=f))
        j3 = orlicz_J(fld, ProblemSpec.power_law(grid2, 2, 2, f=3 * f))
        assert j3 == pytest.approx(3 * j1, rel=1e-15)


class TestRateIdentity:
    @pytest.mark.parametrize("p,q", [(2, 2), (-1, -1), (2, 3)])
    def test_ball_equality_case(self, p, q):
        spec = ProblemSpec.power_law(SphericalGrid(2, 64), p, q, f=1.7)
        jp, gap = J_rate_identity(ball(2, 1.3), spec)
        assert abs(gap) <= 1e-12 and abs(jp) <= 1e-12

    def test_nonconstant_f_strict(self, grid2):
        f = 1 + 0.3 * np.cos(2 * grid2.theta)
        f = 0.5 * (f + f[grid2.antipode])
        spec = ProblemSpec.power_law(grid2, 2, 2, f=f)
        fld = SupportField(grid2, np.ones(grid2.N))
        jp, gap = J_rate_identity(fld, spec)
        # oracle: N Q - D^2 on the unit circle with phi = 1/s, G = 1: D = int f, N = 2pi, Q = int f^2
        D = integrate.quad(lambda t: 1 + 0.3 * np.cos(2 * t), 0, 2 * np.pi)[0]
        Q = integrate.quad(lambda t: (1 + 0.3 * np.cos(2 * t)) ** 2, 0, 2 * np.pi)[0]
        assert gap == pytest.approx(2 * np.pi * Q - D * D, rel=1e-10)
        assert gap > 0 and jp < 0

    @given(data=random_even, pq=st.sampled_from([(2, 2), (1, 3), (-1, -1), (-2, -1)]))
    def test_sign(self, data, pq):
        fld = random_convex_even(*data)
        spec = ProblemSpec.power_law(fld.grid, *pq)
        jp, gap = J_rate_identity(fld, spec)
        assert gap >= -1e-12
        if spec.case is Case.CASE1:
            assert jp <= 1e-12
        else:
            assert jp >= -1e-12


class TestVolumeIdentity:
    def test_unit_ball(self):
        lhs, rhs, gap = volume_identity_check(ball(2, 1.0))
        assert lhs == pytest.approx(2 * np.pi, rel=1e-15) and rhs == pytest.approx(2 * np.pi, rel=1e-15)

    def test_ellipse(self):
        g = SphericalGrid(2, 512)
        lhs, rhs, gap = volume_identity_check(SupportField(g, ellipse_h(g.theta, 1.4, 0.8)))
        assert gap <= 1e-8
        assert abs(lhs / 2 - np.pi * 1.12) / (np.pi * 1.12) <= 1e-8

    def test_ball_n3(self):
        lhs, rhs, _ = volume_identity_check(ball(3, 1.5))
        assert lhs == pytest.approx(4 * np.pi * 1.5**3, rel=1e-12)
        assert rhs == pytest.approx(3 * 4 / 3 * np.pi * 1.5**3, rel=1e-12)


class TestReport:
    @given(data=random_even, pq=st.sampled_from([(2, 2), (-1, -1)]))
    def test_antipodal_relabeling(self, data, pq):
        fld = random_convex_even(*data)
        spec = ProblemSpec.power_law(fld.grid, *pq)
        relabeled = SupportField(fld.grid, fld.h[fld.grid.antipode])
        assert functional_report(fld, spec) == functional_report(relabeled, spec)

    def test_json(self, grid2):
        rep = functional_report(ball(2, 1.0), ProblemSpec.power_law(SphericalGrid(2, 64), 2, 2))
        assert set(rep.to_dict()) == {"Vg", "J", "eta", "eta_numerator", "eta_denominator", "volume"}
        assert np.isfinite(list(rep.to_dict().values())).all()
