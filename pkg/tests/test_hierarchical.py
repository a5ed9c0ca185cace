import math

import numpy as np
import pytest

from nsekit.activations import get_activation
from nsekit.errors import ValidationError
from nsekit.hierarchical import (
    HierarchicalModel,
    effective_single_index,
    feature_threshold,
    feature_thresholds,
    hierarchical_label_machinery,
    mse_gamma_envelopes,
    recovered_features,
    zeta_overlap_prediction,
)
from nsekit.single_index import ChannelDensity, SingleIndexModel, alg_threshold

he2n = get_activation("he2n")


def test_gamma_must_exceed_half():
    with pytest.raises(ValidationError):
        HierarchicalModel(he2n, 0.5)


def test_odd_activation_rejected():
    with pytest.raises(ValidationError):
        feature_threshold(1, HierarchicalModel(get_activation("tanh"), 1.0))


class TestEffective:
    def test_oracle(self):
        model = HierarchicalModel(he2n, 1.0, noise=0.5)
        snr, noise = effective_single_index(4, model)
        assert snr == pytest.approx(4**-2 / 0.5) and noise == 0.5

    def test_self_noise(self):
        model = HierarchicalModel(he2n, 1.0, noise=1.0, width=3)
        _, noise = effective_single_index(2, model, "self-noise")
        assert noise == pytest.approx(1 + 1 + 1 / 9)

    def test_bad_index(self):
        with pytest.raises(ValidationError):
            effective_single_index(65, HierarchicalModel(he2n, 1.0))

    def test_bad_mode(self):
        with pytest.raises(ValidationError):
            effective_single_index(1, HierarchicalModel(he2n, 1.0), "genie")


class TestThresholds:
    def test_first_feature(self):
        model = HierarchicalModel(he2n, 1.0)
        assert feature_threshold(1, model) == pytest.approx(alg_threshold(SingleIndexModel(he2n, 1.0)))

    def test_slope(self):
        model = HierarchicalModel(he2n, 1.0, width=64)
        assert feature_thresholds([8, 16, 32, 64], model).slope() == pytest.approx(2.0, abs=0.05)

    def test_self_noise_is_harder(self):
        model = HierarchicalModel(he2n, 1.0, width=16)
        assert feature_threshold(3, model, "self-noise") > feature_threshold(3, model)

    def test_recovered(self):
        model = HierarchicalModel(he2n, 1.0, width=1000)
        first = feature_threshold(1, model)
        assert recovered_features(0.5 * first, model) == 0
        counts = [recovered_features(a, model) for a in (1e2, 1e3, 1e4)]
        assert counts == sorted(counts) and counts[-1] > counts[0]
        k = counts[1]
        assert feature_threshold(k, model) <= 1e3 < feature_threshold(k + 1, model)

    def test_csv(self):
        text = feature_thresholds([1, 2], HierarchicalModel(he2n, 1.0)).to_csv()
        assert text.splitlines()[0] == "k,alpha_k,lambda_eff,mode"


class TestMse:
    def test_statistical_slope(self):
        model = HierarchicalModel(he2n, 1.0, width=10**6)
        curves = mse_gamma_envelopes(np.geomspace(1e2, 1e6, 9), model)
        assert curves.slopes["statistical"] == pytest.approx(-0.5, abs=0.02)
        assert np.all(curves.statistical <= curves.computational * (1 + 1e-12))

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            mse_gamma_envelopes([10.0, 5.0], HierarchicalModel(he2n, 1.0))


class TestChannel:
    def test_width_one_matches_single_index(self):
        model = HierarchicalModel(he2n, 1.0, noise=1.0, width=1)
        ch = hierarchical_label_machinery(1, model)
        assert ch.expect(np.ones_like(ch.y)) == pytest.approx(1.0, abs=1e-8)
        ref = ChannelDensity(SingleIndexModel(he2n, 1.0))
        y = np.linspace(-3, 3, 13)
        assert np.interp(y, ch.y, ch.density) == pytest.approx(ref.density(y), abs=1e-4)
        assert np.interp(y, ch.y, ch.conditional) == pytest.approx(ref.conditional(y), abs=1e-3)

    def test_width_cap(self):
        with pytest.raises(ValidationError):
            hierarchical_label_machinery(1, HierarchicalModel(he2n, 1.0, width=65))


class TestZeta:
    def test_below_and_above(self):
        model = HierarchicalModel(he2n, 1.0, width=1)
        ch = hierarchical_label_machinery(1, model)
        alg = alg_threshold(SingleIndexModel(he2n, 1.0))
        assert zeta_overlap_prediction(1, 0.5 * alg, model, channel=ch) == 0.0
        high = zeta_overlap_prediction(1, 20 * alg, model, channel=ch)
        assert 0 < high < 1

    def test_increasing_in_alpha(self):
        model = HierarchicalModel(he2n, 1.0, width=1)
        ch = hierarchical_label_machinery(1, model)
        sat = lambda y: np.interp(y, ch.y, ch.conditional) / (np.interp(y, ch.y, ch.conditional) + 1)
        vals = [zeta_overlap_prediction(1, a, model, T=sat, channel=ch) for a in (2.0, 4.0, 8.0, 16.0)]
        assert all(a <= b for a, b in zip(vals, vals[1:])) and vals[-1] > 0

    def test_constant_preprocessing(self):
        model = HierarchicalModel(he2n, 1.0, width=1)
        with pytest.raises(ValidationError):
            zeta_overlap_prediction(1, 5.0, model, T=lambda y: np.ones_like(y))
