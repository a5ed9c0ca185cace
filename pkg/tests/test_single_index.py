import math

import numpy as np
import pytest

from nsekit.activations import get_activation
from nsekit.errors import BracketingError, DomainError, ValidationError
from nsekit.single_index import (
    PsiOutTable,
    SingleIndexModel,
    ThresholdCurve,
    alg_asymptote,
    alg_threshold,
    channel_density,
    free_entropy,
    it_bounds,
    it_threshold,
    loglog_slope,
    psi_out,
    psi_out_gain,
    psi_out_nested,
    psi_out_slope,
    threshold_curve,
)


def model(name, snr):
    return SingleIndexModel(get_activation(name), snr)


class TestChannel:
    def test_density_integrates_to_one(self):
        z, _ = channel_density(model("tanh", 0.5))
        y = np.linspace(-12, 12, 4001)
        assert np.trapezoid(z(y), y) == pytest.approx(1.0, abs=1e-8)

    def test_conditional_has_zero_mean(self):
        # E_y E[z^2-1 | y] = E[z^2-1] = 0
        z, g = channel_density(model("he2", 1.0))
        y = np.linspace(-15, 150, 80001)
        assert np.trapezoid(z(y) * g(y), y) == pytest.approx(0.0, abs=1e-8)

    def test_negative_snr(self):
        with pytest.raises(ValidationError):
            model("he2", -1.0)


class TestAlg:
    # independent trapezoid-plus-adaptive-quadrature references
    @pytest.mark.parametrize("snr,expected", [(1e-2, 3.472086829953117), (1e-4, 1056.1599366058722)])
    def test_he4_reference(self, snr, expected):
        assert alg_threshold(model("he4", snr)) == pytest.approx(expected, rel=1e-7)

    def test_he2_approaches_quarter_over_snr(self):
        assert 1e-4 * alg_threshold(model("he2", 1e-4)) == pytest.approx(0.25, rel=1e-3)

    def test_zero_snr(self):
        assert alg_threshold(model("he2", 0.0)) == math.inf

    def test_asymptote(self):
        assert alg_asymptote(get_activation("he2")) == (1, pytest.approx(0.25))
        beta, const = alg_asymptote(get_activation("he4"))
        assert beta == 2 and const == pytest.approx(2 / 192**2)

    def test_decreasing_in_snr(self):
        vals = [alg_threshold(model("tanh", s)) for s in (0.1, 0.3, 1.0, 3.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestPsiOut:
    def test_gain_vanishes_at_zero(self):
        assert psi_out_gain(0.0, model("tanh", 0.3)) == pytest.approx(0.0, abs=1e-12)

    def test_matches_nested_quadrature(self):
        m = model("tanh", 0.5)
        assert psi_out(0.4, m) == pytest.approx(psi_out_nested(0.4, m), abs=1e-7)

    def test_slope_is_derivative_of_gain(self):
        m, h = model("tanh", 0.3), 1e-3
        fd = (psi_out_gain(0.5 + h, m, 1e-11) - psi_out_gain(0.5 - h, m, 1e-11)) / (2 * h)
        assert psi_out_slope(0.5, m) == pytest.approx(fd, rel=1e-5)

    def test_he2_slope_series(self):
        # for He2 at small snr the gain is snr m^2 to leading order
        snr = 1e-3
        assert psi_out_slope(0.3, model("he2", snr)) == pytest.approx(2 * snr * 0.3, rel=2e-3)

    def test_table_against_direct_gain(self):
        m = model("tanh", 0.1)
        table = PsiOutTable(m)
        for x in (0.01, 0.3, 0.9):
            assert table(x) == pytest.approx(psi_out_gain(x, m), rel=1e-8)
        with pytest.raises(DomainError):
            table(0.995)

    def test_nested_domain(self):
        with pytest.raises(DomainError):
            psi_out_nested(1.0, model("he2", 1.0))


class TestFreeEntropy:
    def test_small_snr_at_zero(self):
        assert free_entropy(0.0, 10.0, model("he4", 1e-3), mode="small-snr") == 0.0

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            free_entropy(0.1, 1.0, model("he2", 1.0), mode="replica")

    def test_domain(self):
        with pytest.raises(DomainError):
            free_entropy(1.0, 1.0, model("he2", 1.0), mode="small-snr")

    def test_he2_small_snr_threshold(self):
        snr = 1e-3
        it = it_threshold(model("he2", snr), 10.0, 1000.0, mode="small-snr", rtol=1e-5)
        assert it * snr == pytest.approx(0.25, rel=1e-4)

    def test_he2_exact_equals_alg(self):
        m = model("he2", 1e-2)
        alg = alg_threshold(m)
        it = it_threshold(m, alg * 1e-3, alg * 1.5)
        assert it == pytest.approx(alg, rel=2e-3)

    def test_bracketing(self):
        with pytest.raises(BracketingError):
            it_threshold(model("he2", 1e-3), 1.0, 10.0, mode="small-snr")


class TestBounds:
    def test_he2(self):
        d, c = it_bounds(get_activation("he2"))
        assert d == pytest.approx(0.25)
        assert c == pytest.approx(math.log(2) / 0.5)

    def test_linear_part_gives_zero_lower_bound(self):
        assert it_bounds(get_activation("tanh"))[0] == 0.0

    def test_ordered(self):
        for name in ("he4", "he4n", "z2", "beta3"):
            d, c = it_bounds(get_activation(name))
            assert 0 < d <= c


class TestCurve:
    def test_slope(self):
        x = np.array([1e-3, 1e-2, 1e-1])
        assert loglog_slope(x, 3 * x**-2) == pytest.approx(-2.0)

    def test_he2_curve(self):
        curve = threshold_curve(get_activation("he2"), [1e-4, 1e-3, 1e-2])
        # 1/(4 snr) minus an O(1) correction
        assert curve.slope() == pytest.approx(-1.0, abs=0.02)
        lines = curve.to_csv().splitlines()
        assert lines[0] == "control,alpha_alg,alpha_it,method"
        assert len(lines) == 4

    def test_bad_control(self):
        with pytest.raises(ValidationError):
            ThresholdCurve("snr", [])
