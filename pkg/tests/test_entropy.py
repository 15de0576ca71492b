import math

import numpy as np
import pytest

from fdkin.collision import ClosedForm
from fdkin.entropy import (
    dissipation_D,
    entropy_S,
    entropy_upper_bound_constant,
    gamma,
    weighted_moment,
)
from fdkin.equilibrium import RegularEquilibrium, eval_equilibrium
from fdkin.geometry import DensityField, build_grid, sphere_quadrature
from fdkin.kernels import make_monomial_kernel

LEB26 = sphere_quadrature("lebedev_like", 26)


class TestGamma:
    def test_diagonal(self):
        for x in (0.0, 1e-12, 0.5, 3.0):
            assert gamma(x, x) == 0.0

    def test_one_sided_infinite(self):
        assert gamma(1.0, 0.0) == math.inf
        assert gamma(0.0, 2.0) == math.inf

    def test_value(self):
        assert gamma(math.e, 1.0) == pytest.approx(math.e - 1.0, rel=1e-14)

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        a = rng.random(1000)
        b = rng.random(1000)
        assert np.all(gamma(a, b) >= 0.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            gamma(-1.0, 1.0)


class TestEntropyS:
    def test_zero_field(self, grid10):
        assert entropy_S(DensityField(grid10, np.zeros((10, 10, 10)))) == 0.0

    def test_indicator_field(self, grid10):
        vals = np.zeros((10, 10, 10))
        vals[2:7, 2:7, 2:7] = 1.0
        assert entropy_S(DensityField(grid10, vals)) == 0.0

    def test_half_filled_subbox(self, grid10):
        vals = np.zeros((10, 10, 10))
        vals[3:6, 3:6, 3:6] = 0.5
        expected = 27 * grid10.cell_volume * math.log(2.0)
        assert entropy_S(DensityField(grid10, vals)) == pytest.approx(expected, rel=1e-12)

    def test_upper_bound(self, random_fields):
        c0 = entropy_upper_bound_constant()
        assert c0 == pytest.approx((2.0 * math.pi) ** 1.5, rel=1e-15)
        for f in random_fields:
            assert entropy_S(f) <= weighted_moment(f, 2.0) + c0


class TestWeightedMoment:
    def test_s0_is_mass(self, smooth_field):
        g = smooth_field.grid
        assert weighted_moment(smooth_field, 0.0) == pytest.approx(
            g.cell_volume * smooth_field.values.sum(), rel=1e-14
        )

    def test_zero_field(self, grid10):
        assert weighted_moment(DensityField(grid10, np.zeros((10, 10, 10))), 4.0) == 0.0

    def test_monotone_in_s(self, random_fields):
        for f in random_fields[:3]:
            assert weighted_moment(f, 1.0) <= weighted_moment(f, 2.0)
            assert weighted_moment(f, 2.0) <= weighted_moment(f, 4.5)


class TestDissipation:
    def test_zero_field(self, grid10):
        f = DensityField(grid10, np.zeros((10, 10, 10)))
        k = make_monomial_kernel(0.0, [1.0])
        assert dissipation_D(f, k, LEB26) == 0.0

    def test_nonnegative_on_random_fields(self, random_fields):
        k = make_monomial_kernel(0.0, [1.0, 0.5])
        for f in random_fields:
            assert dissipation_D(f, k, LEB26) >= 0.0

    def test_equilibrium_noise_floor(self):
        # with exact off-grid values the two sides of Gamma agree to
        # rounding, so D(F) collapses to floor-level noise; a same-moments
        # perturbed field keeps an O(1) dissipation
        g = build_grid(12, 6.0)
        a, b = 1.0, 0.5
        spec = RegularEquilibrium(a=a, b=b, v0=np.zeros(3))
        F = eval_equilibrium(spec, g)
        k = make_monomial_kernel(0.0, [1.0, 0.5])
        exact = ClosedForm.fermi_dirac(a, b, np.zeros(3))
        d_eq = dissipation_D(F, k, LEB26, point_eval=exact)
        bump = np.clip(F.values + 0.05 * np.sin(np.pi * np.arange(12))[:, None, None]
                       * np.ones((12, 12, 12)), 0.0, 1.0)
        d_far = dissipation_D(DensityField(g, bump), k, LEB26)
        assert d_far > 0.0
        assert d_eq <= 1e-8 * d_far

    def test_perturbed_equilibrium_strictly_positive(self):
        g = build_grid(12, 6.0)
        spec = RegularEquilibrium(a=1.0, b=0.5, v0=np.zeros(3))
        F = eval_equilibrium(spec, g)
        k = make_monomial_kernel(0.0, [1.0, 0.5])
        ax = g.axis
        r2 = ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2
        bump = np.exp(-((np.sqrt(r2) - 2.0) ** 2))
        f = DensityField(g, np.clip(F.values + 0.05 * bump, 0.0, 1.0))
        exact = ClosedForm.fermi_dirac(1.0, 0.5, np.zeros(3))
        assert dissipation_D(f, k, LEB26) > 100.0 * max(
            dissipation_D(F, k, LEB26, point_eval=exact), 1e-300
        )

    def test_skip_counter_reports_boundary_contact(self, grid10):
        # a field with an exact-zero region adjacent to occupied nodes
        vals = np.zeros((10, 10, 10))
        vals[4:7, 4:7, 4:7] = 0.5
        f = DensityField(grid10, vals)
        k = make_monomial_kernel(0.0, [1.0])
        val, skipped = dissipation_D(f, k, LEB26, with_count=True)
        assert val >= 0.0
        assert skipped > 0


class TestPointwiseInequality:
    def test_pi_bound_by_gamma(self):
        # |Pi_F| <= 1/2 (sqrt(Pi+) + sqrt(Pi-)) sqrt(Gamma(Pi+, Pi-))
        rng = np.random.default_rng(12)
        q = rng.random((5000, 4))
        pi_p = q[:, 2] * q[:, 3] * (1 - q[:, 0]) * (1 - q[:, 1])
        pi_m = q[:, 0] * q[:, 1] * (1 - q[:, 2]) * (1 - q[:, 3])
        ok = (pi_p > 0) & (pi_m > 0)
        lhs = np.abs(pi_p[ok] - pi_m[ok])
        rhs = 0.5 * (np.sqrt(pi_p[ok]) + np.sqrt(pi_m[ok])) * np.sqrt(
            gamma(pi_p[ok], pi_m[ok])
        )
        assert np.all(lhs <= rhs * (1 + 1e-12))
