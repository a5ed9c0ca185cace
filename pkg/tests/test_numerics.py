import math

import numpy as np
import pytest
from scipy.stats import norm

from nsekit.errors import (
    AccuracyError,
    BracketingError,
    CapabilityError,
    DomainError,
    GridResolutionError,
    ValidationError,
)
from nsekit.numerics import (
    GridDensity,
    bisect_root,
    gauss_hermite_rule,
    integrate_line,
    maximize_unimodal_1d,
    min_eigenvalue_symmetric,
    normal_panel_rule,
    selfconvolve_density,
)


def he(k, z):
    return np.polynomial.hermite_e.hermeval(z, [0] * k + [1])


class TestGaussHermite:
    def test_order_one_is_the_mean(self):
        rule = gauss_hermite_rule(1)
        assert rule.nodes.tolist() == [0.0]
        assert rule.weights.tolist() == [1.0]

    def test_order_two_second_moment(self):
        assert gauss_hermite_rule(2).expect(lambda z: z**2) == pytest.approx(1.0, abs=1e-15)

    def test_he8_norm(self):
        val = gauss_hermite_rule(101).expect(lambda z: he(8, z) ** 2)
        assert val == pytest.approx(40320, rel=1e-6)

    @pytest.mark.parametrize("order", [3, 50, 201, 1024])
    def test_weights_sum_to_one_and_nodes_increase(self, order):
        rule = gauss_hermite_rule(order)
        assert abs(rule.weights.sum() - 1) < 1e-12
        assert np.all(np.diff(rule.nodes) > 0)
        assert np.all(np.isfinite(rule.weights))

    def test_order_cap(self):
        with pytest.raises(CapabilityError):
            gauss_hermite_rule(1025)

    def test_rejects_zero(self):
        with pytest.raises(ValidationError):
            gauss_hermite_rule(0)


def test_panel_rule_handles_kinks():
    rule = normal_panel_rule(kinks=(0.0,))
    # E|z| = sqrt(2/pi) needs a breakpoint at the kink
    assert rule.expect(np.abs) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-13)


class TestIntegrateLine:
    def test_normal_pdf(self):
        assert integrate_line(norm.pdf, 1e-12) == pytest.approx(1.0, abs=1e-10)

    def test_he2_squared(self):
        assert integrate_line(lambda y: norm.pdf(y) * he(2, y) ** 2, 1e-12) == pytest.approx(2.0, abs=1e-8)

    def test_fourth_moment(self):
        assert integrate_line(lambda y: norm.pdf(y) * y**4, 1e-12) == pytest.approx(3.0, abs=1e-8)

    def test_off_center_mass(self):
        f = lambda y: norm.pdf(y, loc=40.0, scale=3.0)
        assert integrate_line(f, 1e-12, center=40.0, scale=3.0) == pytest.approx(1.0, abs=1e-10)

    def test_budget_exhaustion_carries_estimate(self):
        with pytest.raises(AccuracyError) as info:
            integrate_line(lambda y: 1.0 / (1.0 + np.abs(y)), 1e-12, max_panels=40)
        assert info.value.estimate is not None


class TestGridDensity:
    def test_gaussian_stability(self):
        base = GridDensity.from_pdf(norm.pdf, 20.0, 4096)
        two = selfconvolve_density(base, 2)
        target = GridDensity.from_pdf(lambda x: norm.pdf(x, scale=math.sqrt(2)), 20.0, 4096)
        assert two.l1_distance(target) < 1e-6

    def test_times_one_is_identity(self):
        base = GridDensity.from_pdf(norm.pdf, 20.0, 1024)
        assert np.array_equal(selfconvolve_density(base, 1).mass, base.mass)

    def test_he2_sum_of_63(self):
        rule = normal_panel_rule(panels=4000)
        vals = (rule.nodes**2 - 1) / math.sqrt(2)
        base = GridDensity.from_samples(vals, rule.weights, 120.0, 2**16)
        out = selfconvolve_density(base, 63)
        assert abs(out.mean()) < 1e-3
        assert out.var() == pytest.approx(63.0, rel=0.01)

    def test_too_short_grid(self):
        base = GridDensity.from_pdf(norm.pdf, 8.0, 512)
        with pytest.raises(GridResolutionError):
            selfconvolve_density(base, 100)

    def test_samples_outside_grid(self):
        with pytest.raises(GridResolutionError):
            GridDensity.from_samples([0.0, 50.0], [0.5, 0.5], 10.0, 64)

    def test_invariants(self):
        with pytest.raises(ValidationError):
            GridDensity(-1.0, 0.5, np.array([0.5, -0.1, 0.6, 0.0]))
        with pytest.raises(ValidationError):
            GridDensity(-1.0, 0.5, np.array([0.2, 0.2, 0.2, 0.2]))


class TestEigen:
    def test_identity(self):
        assert min_eigenvalue_symmetric(np.eye(3)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert min_eigenvalue_symmetric(np.diag([2.0, -5.0])) == pytest.approx(-5.0)

    def test_asymmetric(self):
        with pytest.raises(ValidationError):
            min_eigenvalue_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestMaximize:
    def test_interior(self):
        x, _ = maximize_unimodal_1d(lambda m: -(m - 0.3) ** 2, 0.0, 1.0, tol=1e-10)
        assert x == pytest.approx(0.3, abs=1e-6)

    def test_boundary(self):
        x, v = maximize_unimodal_1d(lambda m: m + np.log1p(-m), 0.0, 1 - 1e-12)
        assert x == 0.0 and v == 0.0

    def test_stationary_point(self):
        x, _ = maximize_unimodal_1d(lambda m: m + np.log1p(-m) + 2 * m**2, 0.0, 1 - 1e-12, tol=1e-10)
        assert x == pytest.approx(0.75, abs=1e-6)

    def test_non_finite(self):
        with pytest.raises(DomainError) as info, np.errstate(all="ignore"):
            maximize_unimodal_1d(lambda m: np.log(m - 0.5), 0.0, 1.0)
        assert info.value.where is not None


class TestBisect:
    def test_linear(self):
        assert bisect_root(lambda x: x - 1, 0.0, 2.0) == pytest.approx(1.0, abs=1e-12)

    def test_sqrt2(self):
        assert bisect_root(lambda x: x * x - 2, 0.0, 2.0, tol=1e-10) == pytest.approx(math.sqrt(2), abs=1e-9)

    def test_quadratic_closed_form(self):
        a, b, c = 1.0, -1.0, 0.0
        root = bisect_root(lambda t: a * t * t + 2 * t * c + b, 0.0, 2.0)
        assert root == pytest.approx((-c + math.sqrt(c * c - a * b)) / a, abs=1e-12)

    def test_no_sign_change(self):
        with pytest.raises(BracketingError):
            bisect_root(lambda x: x * x + 1, -1.0, 1.0)
