"""Hierarchical multi-index model: ``y = sum_k k^{-gamma} sigma(w_k . x) + sqrt(noise) xi``.

Each feature behaves like a single-index problem whose signal strength
decays as ``k^{-2 gamma}``. This module turns that reduction into
per-feature thresholds, weighted-error scaling curves and the spectral
overlap prediction for a bounded label preprocessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .activations import ActivationSpec, hermite_coeffs, nse
from .errors import BracketingError, ValidationError
from .numerics import GridDensity, bisect_root
from .single_index import SingleIndexModel, alg_threshold, label_rule, loglog_slope, _negligible

__all__ = [
    "HierarchicalModel",
    "FeatureThresholds",
    "effective_single_index",
    "feature_threshold",
    "feature_thresholds",
    "recovered_features",
    "MseCurves",
    "mse_gamma_envelopes",
    "HierarchicalChannel",
    "hierarchical_label_machinery",
    "zeta_overlap_prediction",
    "MODES",
]

MODES = ("oracle", "self-noise")


@dataclass(frozen=True)
class HierarchicalModel:
    activation: ActivationSpec
    gamma: float
    noise: float = 1.0
    width: int = 64

    def __post_init__(self):
        if not self.gamma > 0.5:
            raise ValidationError(f"decay exponent gamma must exceed 1/2, got {self.gamma!r}")
        if not self.noise > 0:
            raise ValidationError("noise variance must be positive")
        if int(self.width) != self.width or self.width < 1:
            raise ValidationError("width must be a positive integer")

    def weight(self, k):
        return np.asarray(k, dtype=float) ** (-self.gamma)


def _check_mode(mode):
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")


def _require_even(spec: ActivationSpec):
    if spec.parity != "even":
        raise ValidationError("per-feature thresholds are stated for even activations")


def _second_moment(spec):
    return hermite_coeffs(spec, 0, warn=False).second_moment


def effective_single_index(k: int, model: HierarchicalModel, mode: str = "oracle") -> tuple[float, float]:
    """``(snr_eff, noise_eff)`` of the single-index problem seen by feature ``k``.

    In oracle mode the other features are known and only the label noise
    remains. In self-noise mode their variance is added to it.
    """
    _check_mode(mode)
    if not 1 <= k <= model.width:
        raise ValidationError(f"feature index must lie in [1, {model.width}], got {k!r}")
    noise = model.noise
    if mode == "self-noise":
        two_g = 2 * model.gamma
        others = float(hurwitz_zeta(two_g, 1) - hurwitz_zeta(two_g, model.width + 1)) - k ** (-two_g)
        noise += others * _second_moment(model.activation)
    return k ** (-2 * model.gamma) / noise, noise


def feature_threshold(k: int, model: HierarchicalModel, mode: str = "oracle") -> float:
    """Computational threshold for weakly recovering feature ``k``."""
    _require_even(model.activation)
    snr, _ = effective_single_index(k, model, mode)
    return _threshold_at(model.activation, snr)


@lru_cache(maxsize=4096)
def _threshold_at(spec, snr):
    return alg_threshold(SingleIndexModel(spec, snr))


@dataclass
class FeatureThresholds:
    per_k: list[tuple[int, float, float, float]]
    mode: str

    def slope(self, k_min: int = 1, k_max: int | None = None) -> float:
        pts = [(k, a) for k, a, _, _ in self.per_k if k >= k_min and (k_max is None or k <= k_max)]
        return loglog_slope([p[0] for p in pts], [p[1] for p in pts])

    def to_csv(self) -> str:
        rows = ["k,alpha_k,lambda_eff,mode"]
        rows += [f"{k},{a:.16e},{s:.16e},{self.mode}" for k, a, s, _ in self.per_k]
        return "\n".join(rows) + "\n"


def feature_thresholds(ks: Sequence[int], model: HierarchicalModel, mode: str = "oracle") -> FeatureThresholds:
    rows = []
    for k in ks:
        snr, noise = effective_single_index(int(k), model, mode)
        rows.append((int(k), feature_threshold(int(k), model, mode), snr, noise))
    return FeatureThresholds(rows, mode)


def recovered_features(alpha: float, model: HierarchicalModel, mode: str = "oracle") -> int:
    """``max{k : threshold(k) <= alpha}``, found by bisection on k.

    Thresholds are nondecreasing in k (the effective snr decreases), so the
    recovered set is an initial segment.
    """
    if feature_threshold(1, model, mode) > alpha:
        return 0
    lo, hi = 1, model.width
    if feature_threshold(hi, model, mode) <= alpha:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feature_threshold(mid, model, mode) <= alpha:
            lo = mid
        else:
            hi = mid
    return lo


def _power_sum(s, a, b):
    """sum_{k=a}^{b} k^{-s} (zero when a > b)."""
    if a > b:
        return 0.0
    return float(hurwitz_zeta(s, a) - hurwitz_zeta(s, b + 1))


@dataclass
class MseCurves:
    """Weighted-error curves over an alpha grid; constants set to 1 (scaling only)."""

    alpha: np.ndarray
    computational: np.ndarray
    statistical: np.ndarray
    khat: np.ndarray
    slopes: dict

    def to_csv(self) -> str:
        rows = ["alpha,mse_comp,mse_stat,khat"]
        rows += [f"{a:.16e},{c:.16e},{s:.16e},{int(k)}"
                 for a, c, s, k in zip(self.alpha, self.computational, self.statistical, self.khat)]
        return "\n".join(rows) + "\n"


def _mse_recovered_prefix(khat, alpha, two_g):
    """sum_{k<=khat} k^{-2g} min(1, k^{2g}/alpha) = sum_{k<=khat} min(k^{-2g}, 1/alpha)."""
    cross = min(khat, math.floor(alpha ** (1 / two_g)))
    return cross / alpha + _power_sum(two_g, cross + 1, khat)


def mse_gamma_envelopes(alpha_grid: Sequence[float], model: HierarchicalModel, mode: str = "oracle") -> MseCurves:
    """Computational weighted error and the statistical lower envelope.

    Recovered features (those with threshold below alpha) contribute
    ``k^{-2 gamma} min(1, k^{2 gamma} / alpha)``; the rest contribute their
    full weight ``k^{-2 gamma}``. The statistical envelope treats every
    feature as recoverable, which gives ``Theta(alpha^{-1 + 1/(2 gamma)})``.
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if alphas.ndim != 1 or alphas.size < 2 or np.any(alphas <= 0) or np.any(np.diff(alphas) <= 0):
        raise ValidationError("alpha grid must be positive and strictly increasing")
    two_g = 2 * model.gamma
    p = model.width
    comp, stat, khat = [], [], []
    for a in alphas:
        kh = recovered_features(float(a), model, mode)
        comp.append(_mse_recovered_prefix(kh, a, two_g) + _power_sum(two_g, kh + 1, p))
        stat.append(_mse_recovered_prefix(p, a, two_g))
        khat.append(kh)
    comp, stat, khat = np.array(comp), np.array(stat), np.array(khat)
    slopes = {
        "computational": loglog_slope(alphas, comp),
        "statistical": loglog_slope(alphas, stat),
        "scaling_only": True,
    }
    return MseCurves(alphas, comp, stat, khat, slopes)


# ---------------------------------------------------------------------------
# spectral overlap prediction


@dataclass
class HierarchicalChannel:
    """Label density and ``G_k(y) = E[z_k^2 - 1 | y]`` for one feature on a grid."""

    y: np.ndarray
    density: np.ndarray
    conditional: np.ndarray
    step: float

    def expect(self, values) -> float:
        return float(np.sum(self.density * values) * self.step)


def hierarchical_label_machinery(k: int, model: HierarchicalModel) -> HierarchicalChannel:
    """Label law of the full model by a product of per-unit characteristic functions."""
    p = model.width
    if p > 64:
        raise ValidationError("the full label density is built for width <= 64")
    if not 1 <= k <= p:
        raise ValidationError(f"feature index must lie in [1, {p}]")
    spec, noise = model.activation, model.noise
    rule = label_rule(spec, 1.0 / noise, negligible=_negligible(SingleIndexModel(spec, 1.0 / noise), 1e-10))
    live = rule.weights > 1e-18
    z, w = rule.nodes[live], rule.weights[live] / rule.weights[live].sum()
    sig = spec(z)
    std = math.sqrt(float(w @ sig**2))
    scales = model.weight(np.arange(1, p + 1))
    step = min(math.sqrt(noise) / 32, scales[-1] * std / 32)
    reach = float(np.abs(sig).max()) + 12 * std * math.sqrt(float(np.sum(scales**2))) + 14 * math.sqrt(noise)
    cells = 1 << max(10, math.ceil(math.log2(2 * reach / step)))
    half = cells * step / 2
    omega = 2 * np.pi * np.fft.rfftfreq(cells, d=step)
    others = np.exp(-0.5 * noise * omega**2).astype(complex)
    for j, a in enumerate(scales, start=1):
        if j != k:
            others = others * np.fft.rfft(GridDensity.from_samples(a * sig, w, half, cells).mass)
    own = GridDensity.from_samples(scales[k - 1] * sig, w, half, cells)
    pos = (scales[k - 1] * sig + half) / step
    left = np.minimum(np.floor(pos).astype(np.int64), cells - 2)
    frac = pos - left
    h = z**2 - 1
    tilted = np.bincount(left, w * h * (1 - frac), minlength=cells)
    tilted += np.bincount(left + 1, w * h * frac, minlength=cells)
    # each of the p deposits sits n/2 cells off the symmetric origin
    shift = ((p - 1) * (cells // 2)) % cells
    Z = np.roll(np.fft.irfft(others * np.fft.rfft(own.mass), n=cells), -shift) / step
    N = np.roll(np.fft.irfft(others * np.fft.rfft(tilted), n=cells), -shift) / step
    y = -half + step * np.arange(cells)
    ok = Z > 1e-13 * Z.max()
    Z = np.where(ok, Z, 0.0)
    g = np.divide(N, Z, out=np.zeros_like(N), where=ok)
    return HierarchicalChannel(y, Z, g, step)


def zeta_overlap_prediction(k: int, alpha: float, model: HierarchicalModel,
                            T: Callable[[np.ndarray], np.ndarray] | None = None,
                            channel: HierarchicalChannel | None = None) -> float:
    """Predicted squared overlap of the k-th spectral direction with feature k.

    ``t_hat`` solves ``alpha E[G_k T / (t - T)] = 1`` on ``t > sup T``; the
    squared overlap is ``zeta'(t_hat) / (zeta'(t_hat) - alpha R_k'(t_hat))``
    with ``zeta_alpha(t) = t (1 + alpha E[T / (t - T)])`` and
    ``R_k(t) = t E[z_k^2 T / (t - T)]``. Returns 0 below the spectral
    threshold (no root, or no outlier because ``zeta'(t_hat) <= 0``).
    The default preprocessing is ``clip(G_k, -10, 10)``.
    """
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    ch = channel if channel is not None else hierarchical_label_machinery(k, model)
    live = ch.density > 0
    y, Z, G = ch.y[live], ch.density[live], ch.conditional[live]
    t_vals = np.clip(G, -10, 10) if T is None else np.asarray(T(y), dtype=float)
    if not np.all(np.isfinite(t_vals)):
        raise ValidationError("preprocessing must be finite on the label support")
    weight = Z * ch.step
    top = float(t_vals.max())
    if top - float(t_vals.min()) < 1e-12:
        raise ValidationError("preprocessing must be non-constant")

    def lhs(t):
        return alpha * float(np.sum(weight * G * t_vals / (t - t_vals))) - 1.0

    lo = top + 1e-9 * max(1.0, abs(top))
    if lhs(lo) <= 0:
        return 0.0
    hi = max(2 * abs(top), 1.0) + lo
    while lhs(hi) > 0:
        hi *= 2
        if hi > 1e300:
            raise BracketingError("no upper bracket for the spectral equation")
    t_hat = bisect_root(lhs, lo, hi, tol=1e-12 * hi)
    gap = t_hat - t_vals
    ratio_sq = t_vals**2 / gap**2
    zeta_prime = 1.0 - alpha * float(np.sum(weight * ratio_sq))
    if zeta_prime <= 0:
        return 0.0
    r_prime = -float(np.sum(weight * (G + 1.0) * ratio_sq))
    value = zeta_prime / (zeta_prime - alpha * r_prime)
    return float(min(max(value, 0.0), 1.0))


def zeta_function(t: float, alpha: float, channel: HierarchicalChannel, T=None) -> float:
    """``zeta_alpha(t)`` on a prebuilt channel (used for the tail identity)."""
    live = channel.density > 0
    y = channel.y[live]
    t_vals = np.clip(channel.conditional[live], -10, 10) if T is None else np.asarray(T(y), dtype=float)
    weight = channel.density[live] * channel.step
    return t * (1 + alpha * float(np.sum(weight * t_vals / (t - t_vals))))
