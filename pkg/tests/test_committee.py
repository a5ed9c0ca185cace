import math

import numpy as np
import pytest

from nsekit.activations import get_activation, hermite_coeffs
from nsekit.committee import (
    CommitteeModel,
    CommitteeOrderParams,
    Superlinear,
    committee_alg_threshold,
    committee_asymptote,
    committee_label_machinery,
    gamma_functions,
    it_specialization_check,
    overlap_bound,
    rs_gradient,
    rs_potential,
    run_se,
    se_step,
    specialization_alg_threshold,
)
from nsekit.errors import DomainError, ValidationError
from nsekit.single_index import SingleIndexModel, alg_threshold

he2n = get_activation("he2n")
he4n = get_activation("he4n")


class TestModel:
    def test_width(self):
        with pytest.raises(ValidationError):
            CommitteeModel(he2n, 0)
        with pytest.raises(ValidationError):
            CommitteeModel(he2n, 2.5)

    def test_noise(self):
        with pytest.raises(ValidationError):
            CommitteeModel(he2n, 4, noise=0.0)

    def test_centered(self):
        with pytest.raises(ValidationError, match="centered"):
            CommitteeModel(get_activation("z2"), 4)

    def test_order_params(self):
        with pytest.raises(ValidationError):
            CommitteeOrderParams(1.5, 0.5)
        with pytest.raises(ValidationError):
            CommitteeOrderParams(0.5, 0.0)
        assert CommitteeOrderParams(1e-3, 1.0).q_a == pytest.approx(-1e-3)


class TestExactThreshold:
    @pytest.mark.parametrize("name", ["he2n", "tanh"])
    def test_width_one_is_single_index(self, name):
        spec = get_activation(name)
        exact = committee_alg_threshold(CommitteeModel(spec, 1, noise=0.5))
        assert exact == pytest.approx(alg_threshold(SingleIndexModel(spec, 2.0)), rel=2e-4)

    def test_normalized_density(self):
        ch = committee_label_machinery(CommitteeModel(he2n, 8))
        assert ch.normalization() == pytest.approx(1.0, abs=1e-8)

    def test_grows_linearly_for_he2(self):
        a16 = committee_alg_threshold(CommitteeModel(he2n, 16))
        a64 = committee_alg_threshold(CommitteeModel(he2n, 64))
        assert math.log(a64 / a16) / math.log(4) == pytest.approx(1.0, abs=0.05)


class TestAsymptote:
    def test_he2(self):
        beta, const = committee_asymptote(he2n, 1.0)
        assert beta == 1 and const == pytest.approx(math.sqrt(2) / 2)

    def test_needs_unit_variance(self):
        with pytest.raises(ValidationError):
            committee_asymptote(get_activation("he2"), 1.0)


class TestPotential:
    def test_gamma_endpoints(self):
        g1, g2, g2t, _ = gamma_functions(0.0, he2n)
        assert g1 == 0 and g2 == pytest.approx(1.0) and g2t == pytest.approx(1.0)
        assert gamma_functions(1.0, he2n)[1] == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(DomainError):
            gamma_functions(1.1, he2n)

    def test_gamma_linear_part(self):
        tanh = get_activation("tanh")
        c1 = hermite_coeffs(tanh, 1, warn=False)[1]
        g1, g2, g2t, _ = gamma_functions(0.3, tanh)
        assert g1 == pytest.approx(0.7 * c1)
        assert g2 - g2t == pytest.approx(0.7 * c1**2)

    def test_gradient(self):
        model = CommitteeModel(get_activation("tanh"), 20)
        x, eps = CommitteeOrderParams(0.3, 0.6), 1e-6
        dq, dh = rs_gradient(x, 15.0, model)
        f = lambda q, h: rs_potential(CommitteeOrderParams(q, h), 15.0, model)
        assert dq == pytest.approx((f(0.3 + eps, 0.6) - f(0.3 - eps, 0.6)) / (2 * eps), rel=1e-6)
        assert dh == pytest.approx((f(0.3, 0.6 + eps) - f(0.3, 0.6 - eps)) / (2 * eps), rel=1e-6)

    def test_full_overlap_outside_domain(self):
        with pytest.raises(DomainError):
            rs_potential(CommitteeOrderParams(1.0, 0.5), 1.0, CommitteeModel(he2n, 4))


class TestStateEvolution:
    def test_zero_is_fixed(self):
        nxt = se_step(CommitteeOrderParams(0.0, 1.0), 100.0, CommitteeModel(he2n, 100))
        assert nxt.q_d == 0.0

    def test_needs_width_two(self):
        with pytest.raises(ValidationError):
            se_step(CommitteeOrderParams(0.1, 1.0), 1.0, CommitteeModel(he2n, 1))

    @pytest.mark.parametrize("ratio,label", [(0.31, "unspecialized"), (0.69, "specialized")])
    def test_transition(self, ratio, label):
        p = 1000
        trace = run_se(CommitteeOrderParams(1e-3, 1.0), ratio * p, CommitteeModel(he2n, p))
        assert trace.converged and trace.classification == label

    def test_trace_csv(self):
        trace = run_se(CommitteeOrderParams(1e-3, 1.0), 100.0, CommitteeModel(he2n, 1000), t_max=5)
        lines = trace.to_csv().splitlines()
        assert lines[0] == "t,q_d,h" and len(lines) == len(trace.steps) + 1

    def test_alpha_warning(self):
        with pytest.warns(UserWarning, match="p\\^\\(3/2\\)"):
            run_se(CommitteeOrderParams(1e-3, 1.0), 100.0, CommitteeModel(he2n, 4), t_max=3)


class TestSpecialization:
    def test_he2_threshold(self):
        assert specialization_alg_threshold(he2n) == pytest.approx(0.5)

    def test_superlinear(self):
        assert specialization_alg_threshold(he4n) is Superlinear.MARKER

    def test_linear(self):
        with pytest.raises(ValidationError):
            specialization_alg_threshold(get_activation("z"))

    def test_overlap_bound(self):
        eps = 0.01
        g2 = gamma_functions(1 - eps, he2n)[1]
        assert eps * overlap_bound(eps, he2n) == pytest.approx(g2, rel=1e-12)

    def test_check(self):
        assert it_specialization_check(1.2, 1e-3, he2n)
        assert not it_specialization_check(0.3, 1e-3, he2n)
        with pytest.raises(ValidationError):
            it_specialization_check(1.0, 0.7, he2n)
