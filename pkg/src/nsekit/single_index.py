"""Weak-recovery thresholds of the noisy single-index model.

Labels are ``y = sqrt(snr) * sigma(w . x) + xi`` with standard Gaussian
noise. The computational threshold is the inverse of
``E_y[(E[z^2 - 1 | y])^2]``; the statistical one is the smallest sample ratio
at which the replica-symmetric free entropy has a non-trivial global
maximizer.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.special import logsumexp

from .activations import (
    ActivationSpec,
    expectation_rule,
    gauss_hermite_rule,
    hermite_coeffs,
    nse,
)
from .errors import BracketingError, DomainError, ValidationError
from .numerics import (
    QuadratureRule,
    integrate_line,
    maximize_unimodal_1d,
    normal_panel_rule,
)

__all__ = [
    "SingleIndexModel",
    "ChannelDensity",
    "channel_density",
    "label_rule",
    "alg_threshold",
    "alg_asymptote",
    "psi_out",
    "psi_out_gain",
    "psi_out_nested",
    "psi_out_slope",
    "label_entropy",
    "PsiOutTable",
    "free_entropy",
    "it_threshold",
    "it_bounds",
    "ThresholdCurve",
    "threshold_curve",
    "loglog_slope",
    "WEAK_RECOVERY_OVERLAP",
    "M_HAT",
]

WEAK_RECOVERY_OVERLAP = 1e-4
M_HAT = 0.5
PSI_ORDERS = (61, 61, 81, 61)
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class SingleIndexModel:
    activation: ActivationSpec
    snr: float

    def __post_init__(self):
        if not self.snr >= 0 or not math.isfinite(self.snr):
            raise ValidationError(f"signal-to-noise ratio must be finite and >= 0, got {self.snr!r}")


# ---------------------------------------------------------------------------
# label density and conditional expectation


def _channel_terms(y, r, w, h):
    """log Z(y) and G(y) for the mixture sum_i w_i phi(y - r_i).

    Works with e_i = r_i y - r_i^2 / 2 so that Z = phi(y) sum_i w_i exp(e_i).
    When every e_i is small the numerator uses expm1, which removes the
    exactly-cancelling sum_i w_i h_i and keeps precision at small snr.
    """
    e = np.multiply.outer(y, r) - 0.5 * r * r
    top = e.max(axis=1)
    ex = np.exp(e - top[:, None])
    zs = ex @ w
    # the expm1 route only pays off when the mixture mass is O(1); when
    # every exponent is very negative its absolute error would dominate
    small = (top < 0.5) & (np.log(zs) + top > -0.7)
    shift = np.where(small, 0.0, top)
    if small.any():
        ex[small] = np.exp(e[small])
        zs[small] = ex[small] @ w
    ns = np.empty_like(zs)
    if small.any():
        ns[small] = np.expm1(e[small]) @ (w * h)
    if (~small).any():
        ns[~small] = ex[~small] @ (w * h)
    log_z = -0.5 * y * y - _LOG_SQRT_2PI + shift + np.log(zs)
    return log_z, ns / zs


class ChannelDensity:
    """Label density ``Z(y)`` and ``G(y) = E[z^2 - 1 | y]`` for one model.

    ``underflow`` is set after each call when some ``Z(y)`` fell below the
    smallest positive double; ``G`` is reported as 0 there.
    """

    def __init__(self, model: SingleIndexModel, rule: QuadratureRule | None = None, chunk: int = 4096):
        self.model = model
        if rule is None:
            spec = model.activation
            rule = normal_panel_rule(kinks=spec.kinks) if spec.kinks else gauss_hermite_rule(201)
        self.rule = rule
        self._r = math.sqrt(model.snr) * model.activation(rule.nodes)
        self._w = rule.weights
        self._h = rule.nodes**2 - 1
        self._chunk = max(1, int(chunk * 200 // max(len(rule), 1)))
        self.underflow = False

    def _terms(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        log_z = np.empty(y.shape)
        g = np.empty(y.shape)
        flat_y = y.ravel()
        lz, gg = log_z.ravel(), g.ravel()
        for i in range(0, flat_y.size, self._chunk):
            sl = slice(i, i + self._chunk)
            lz[sl], gg[sl] = _channel_terms(flat_y[sl], self._r, self._w, self._h)
        return log_z, g

    def log_density(self, y):
        return self._terms(y)[0]

    def density(self, y):
        log_z, _ = self._terms(y)
        z = np.exp(log_z)
        self.underflow = bool(np.any(z == 0.0))
        return z

    def conditional(self, y):
        log_z, g = self._terms(y)
        dead = np.exp(log_z) == 0.0
        self.underflow = bool(dead.any())
        return np.where(dead, 0.0, g)

    def fisher_integrand(self, y):
        """Z(y) G(y)^2, the integrand of the inverse threshold."""
        log_z, g = self._terms(y)
        return np.exp(log_z) * g * g


def channel_density(model: SingleIndexModel, rule: QuadratureRule | None = None):
    """Return ``(Z, G)`` evaluators for the label density and E[z^2-1|y]."""
    ch = ChannelDensity(model, rule)
    return ch.density, ch.conditional


def label_rule(
    spec: ActivationSpec,
    snr: float,
    half_width: float = 12.0,
    base_step: float = 0.25,
    resolution: float = 1.0,
    max_nodes: int = 400_000,
    negligible: float = 1e-22,
    shift: float = 0.0,
    stretch: float = 1.0,
) -> QuadratureRule:
    """Composite rule in z that resolves the bumps of phi(y - sqrt(snr) sigma(shift + stretch z)).

    Panels are split until ``sqrt(snr) |sigma'| * width <= resolution`` on
    every panel whose Gaussian weight, times a quartic bound on (z^2-1)^2,
    exceeds ``negligible``. Fixed-order
    Gauss-Hermite rules miss these bumps once ``sqrt(snr) sigma`` varies
    quickly, which is what happens in the tails at small snr.
    """
    edges = np.arange(-half_width, half_width + base_step / 2, base_step)
    if spec.kinks:
        kinks = (np.asarray(spec.kinks, dtype=float) - shift) / stretch
        edges = np.union1d(edges, kinks[np.abs(kinks) < half_width])
    amp = math.sqrt(snr) * stretch
    for _ in range(40):
        a, b = edges[:-1], edges[1:]
        mid = (a + b) / 2
        slope = amp * np.maximum.reduce([np.abs(spec.derivative(shift + stretch * p)) for p in (a, mid, b)])
        near = np.minimum(np.abs(a), np.abs(b))
        near = np.where(a * b < 0, 0.0, near)
        far = np.maximum(np.abs(a), np.abs(b))
        relevance = np.exp(-0.5 * near**2) * (1 + far**4)
        need = (slope * (b - a) > resolution) & (relevance > negligible)
        if not need.any() or 8 * (edges.size + need.sum()) > max_nodes:
            break
        edges = np.union1d(edges, mid[need])
    return normal_panel_rule(edges=edges, order=8)


def alg_threshold(model: SingleIndexModel, tol: float = 1e-9, rule: QuadratureRule | None = None) -> float:
    """Computational weak-recovery threshold ``1 / int Z(y) G(y)^2 dy``.

    Returns ``inf`` at zero snr, for exponents beyond the cap, and whenever
    the integral is below 1e-14.
    """
    if model.snr == 0:
        return math.inf
    if nse(model.activation).cap_exceeded:
        return math.inf
    # An unresolved panel misplaces at most its own weight, so panels far
    # below the expected size of the integral need no refinement.
    negligible = _negligible(model, tol)
    if rule is None:
        rule = label_rule(model.activation, model.snr, negligible=negligible)
    ch = ChannelDensity(model, rule)
    z = rule.nodes
    live = np.exp(-0.5 * z * z) * (1 + z**4) > negligible
    r = ch._r[live]
    core = (min(r.min(), 0.0) - 10.0, max(r.max(), 0.0) + 10.0)
    value = integrate_line(ch.fisher_integrand, tol, core=core)
    if value < 1e-14:
        return math.inf
    return 1.0 / value


def alg_asymptote(spec: ActivationSpec) -> tuple[int, float]:
    """``(beta_star, constant)`` with alpha_alg ~ constant * snr**(-beta_star) as snr -> 0."""
    res = nse(spec)
    if res.cap_exceeded:
        raise ValidationError(f"exponent exceeds the cap {res.beta_cap}; no power law")
    b = res.beta_star
    return b, math.factorial(b) / res.mu_star**2


# ---------------------------------------------------------------------------
# free entropy


def _negligible(model: SingleIndexModel, tol: float) -> float:
    """Gaussian weight below which a panel cannot affect the result at ``tol``."""
    beta, const = alg_asymptote(model.activation)
    return 1e-2 * tol * min(1.0, model.snr**beta / const)


def _mixture_logs(y, r, w):
    """``log A(y)`` and ``A(y) - 1`` for ``A(y) = sum_i w_i exp(r_i y - r_i^2 / 2)``.

    The second is NaN wherever some exponent reaches 0.5 or ``A`` is far
    below 1; elsewhere it is summed through expm1 and keeps full relative
    precision.
    """
    e = np.multiply.outer(y, r) - 0.5 * r * r
    top = e.max(axis=1)
    log_a = top + np.log(np.exp(e - top[:, None]) @ w)
    small = (top < 0.5) & (log_a > -0.7)
    excess = np.full(y.shape, np.nan)
    if small.any():
        excess[small] = np.expm1(e[small]) @ w
    return log_a, excess


def _relative_entropy_density(log_z, lt, u):
    """Pointwise ``Z (t log t - t + 1)`` with ``t = exp(lt) = 1 + u``."""
    small = np.abs(u) < 1e-2
    out = np.empty_like(lt)
    us = u[small]
    series = us**2 / 2 - us**3 / 6 + us**4 / 12 - us**5 / 20 + us**6 / 30 - us**7 / 42
    out[small] = np.exp(log_z[small]) * series
    big = ~small
    zv = np.exp(log_z[big] + lt[big])
    out[big] = zv * lt[big] - zv + np.exp(log_z[big])
    return out


class _GainIntegrand:
    def __init__(self, model, m, outer_order, tol):
        spec = model.activation
        amp = math.sqrt(model.snr)
        negligible = _negligible(model, tol)
        base = label_rule(spec, model.snr, negligible=negligible)
        self.base = (amp * spec(base.nodes), base.weights)
        outer = gauss_hermite_rule(outer_order)
        a, b = math.sqrt(m), math.sqrt(1 - m)
        self.inner = []
        lo = hi = 0.0
        for v, wv in zip(outer.nodes, outer.weights):
            # KL(Z_V || Z) grows at most like snr sigma^2 / 2; drop nodes whose
            # weighted share cannot register.
            if wv * (1 + model.snr * float(spec(v)) ** 2) < 1e-4 * tol * negligible:
                continue
            rule = label_rule(spec, model.snr,
                              negligible=negligible / max(wv, 1e-300), shift=a * v, stretch=b)
            r = amp * spec(a * v + b * rule.nodes)
            self.inner.append((wv, r, rule.weights, rule.nodes))
            z = rule.nodes
            live = r[np.exp(-0.5 * z * z) * (1 + z**4) > negligible / max(wv, 1e-300)]
            if live.size:
                lo, hi = min(lo, live.min()), max(hi, live.max())
        self.core = (lo - 10.0, hi + 10.0)
        self.size = max(len(rule_[1]) for rule_ in self.inner)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        step = max(1, 2_000_000 // max(self.size, self.base[0].size))
        for i in range(0, y.size, step):
            out[i:i + step] = self._block(y[i:i + step])
        return out

    def _block(self, y):
        log_a0, ex0 = _mixture_logs(y, *self.base)
        log_z = -0.5 * y * y - _LOG_SQRT_2PI + log_a0
        total = np.zeros(y.shape)
        for wv, r, w, _ in self.inner:
            log_av, exv = _mixture_logs(y, r, w)
            lt = log_av - log_a0
            with np.errstate(over="ignore"):
                u = np.where(np.isnan(ex0) | np.isnan(exv), np.expm1(lt), (exv - ex0) / (1 + ex0))
            total += wv * _relative_entropy_density(log_z, lt, u)
        return total


def psi_out_gain(m: float, model: SingleIndexModel, tol: float = 1e-8, outer_order: int = 61) -> float:
    """``psi_out(m) - psi_out(0)``, computed as an average relative entropy.

    Writing ``Z_V`` for the label density given the planted projection
    ``V``, the difference equals ``E_V KL(Z_V || Z)``. Integrating the
    non-negative density ``Z (t log t - t + 1)`` with ``t = Z_V / Z`` avoids
    subtracting two O(1) numbers to get an O(snr) result.
    """
    if not 0 <= m < 1:
        raise DomainError(f"overlap must lie in [0, 1), got {m!r}", where=m)
    if m == 0 or model.snr == 0:
        return 0.0
    f = _GainIntegrand(model, m, outer_order, tol)
    return integrate_line(f, tol, core=f.core)


class _SlopeIntegrand(_GainIntegrand):
    """``E_V [N_V(y)^2 / ((1-m) Z_V(y))]`` with ``N_V = d Z_V / d(omega)`` times sqrt(1-m).

    ``N_V`` is the label density weighted by the inner Gaussian variable,
    summed through expm1 so that its exact cancellation at small snr
    survives.
    """

    def __init__(self, model, m, outer_order, tol):
        super().__init__(model, m, outer_order, tol)
        self.stretch_sq = 1.0 - m

    def _block(self, y):
        total = np.zeros(y.shape)
        log_phi = -0.5 * y * y - _LOG_SQRT_2PI
        for wv, r, w, z in self.inner:
            e = np.multiply.outer(y, r) - 0.5 * r * r
            top = e.max(axis=1)
            ex = np.exp(e - top[:, None])
            a = ex @ w
            small = (top < 0.5) & (np.log(a) + top > -0.7)
            shift = np.where(small, 0.0, top)
            if small.any():
                ex[small] = np.exp(e[small])
                a[small] = ex[small] @ w
            b = np.empty(y.shape)
            if small.any():
                b[small] = np.expm1(e[small]) @ (w * z) + float(w @ z)
            if (~small).any():
                b[~small] = ex[~small] @ (w * z)
            with np.errstate(over="ignore", invalid="ignore"):
                term = np.exp(log_phi + shift) * b * b / a
            total += wv * np.where(a > 0, term, 0.0)
        return total / self.stretch_sq


def psi_out_slope(m: float, model: SingleIndexModel, tol: float = 1e-8, outer_order: int = 61) -> float:
    """Derivative of ``psi_out`` in ``m``: ``E[g_out^2] / 2``.

    ``g_out`` is the derivative of the log label density given the planted
    projection with respect to its mean. The integrand is a square that
    vanishes identically at ``m = 0`` for even activations, so integrating
    the slope in ``m`` has no error floor at the origin, unlike the
    relative-entropy route whose two separately discretized densities leave
    a small positive residue.
    """
    if not 0 <= m < 1:
        raise DomainError(f"overlap must lie in [0, 1), got {m!r}", where=m)
    if model.snr == 0:
        return 0.0
    f = _SlopeIntegrand(model, m, outer_order, tol)
    return 0.5 * integrate_line(f, tol, core=f.core)


def label_entropy(model: SingleIndexModel, tol: float = 1e-10) -> float:
    """``E_Y log Z(Y)``, the m-independent part of ``psi_out``."""
    ch = ChannelDensity(model, label_rule(model.activation, model.snr) if model.snr else None)
    r = ch._r
    core = (min(r.min(), 0.0) - 10.0, max(r.max(), 0.0) + 10.0)

    def f(y):
        log_z = ch.log_density(y)
        return np.exp(log_z) * log_z

    return integrate_line(f, tol, core=core)


def psi_out(m: float, model: SingleIndexModel, tol: float = 1e-8) -> float:
    """E_{V,W,Y} log E_w P(Y | sqrt(m) V + sqrt(1-m) w).

    Evaluated as ``label_entropy + psi_out_gain(m)``; see ``psi_out_nested``
    for the direct nested quadrature.
    """
    return label_entropy(model) + psi_out_gain(m, model, tol)


def psi_out_nested(m: float, model: SingleIndexModel, orders: Sequence[int] = PSI_ORDERS) -> float:
    """E_{V,W,Y} log E_w P(Y | sqrt(m) V + sqrt(1-m) w), nested Gauss-Hermite.

    Reliable while ``sqrt(snr) sigma`` varies slowly over the inner nodes;
    ``psi_out`` is the accurate route and this one serves as a cross-check.

    The Gaussian factor of P is pulled out of the inner expectation and its
    contribution ``E log phi(Y)`` is evaluated on the same nodes; the inner
    log-expectation uses log-sum-exp.
    """
    if not 0 <= m < 1:
        raise DomainError(f"overlap must lie in [0, 1), got {m!r}", where=m)
    rv, rw, rn, ri = (gauss_hermite_rule(o) for o in orders)
    amp = math.sqrt(model.snr)
    sig = model.activation
    a, b = math.sqrt(m), math.sqrt(1 - m)
    total = 0.0
    log_wi = np.log(ri.weights)
    for v, wv in zip(rv.nodes, rv.weights):
        s_outer = amp * sig(a * v + b * rw.nodes)            # (W,)
        s_inner = amp * sig(a * v + b * ri.nodes)            # (w,)
        y = s_outer[:, None] + rn.nodes[None, :]             # (W, xi)
        expo = y[:, :, None] * s_inner - 0.5 * s_inner**2 + log_wi
        inner = logsumexp(expo, axis=2)                      # (W, xi)
        log_phi = -0.5 * y * y - _LOG_SQRT_2PI
        per_w = (inner + log_phi) @ rn.weights
        total += wv * float(per_w @ rw.weights)
    return total


class PsiOutTable:
    """``psi_out(m) - psi_out(0)`` over ``[0, m_max]`` from its slope.

    The threshold search evaluates the free entropy thousands of times, so
    the slope ``psi_out'(m)`` is computed once on Chebyshev nodes, fitted by
    a Chebyshev series and integrated from 0 in closed form. Working with
    the slope keeps relative accuracy near ``m = 0``, where the gain itself
    is tiny and a direct evaluation only has absolute accuracy.
    """

    def __init__(self, model: SingleIndexModel, nodes: int = 25, m_max: float = 0.99, tol: float = 1e-7):
        self.model = model
        self.m_max = m_max
        k = np.arange(nodes)
        self.m = m_max * (1 - np.cos(np.pi * (k + 0.5) / nodes)) / 2
        self.slopes = np.array([psi_out_slope(float(x), model, tol) for x in self.m])
        fit = Chebyshev.fit(self.m, self.slopes, nodes - 1, domain=[0.0, m_max])
        self._gain = fit.integ(lbnd=0.0)

    def __call__(self, m):
        m = np.asarray(m, dtype=float)
        if np.any(m < 0) or np.any(m > self.m_max + 1e-12):
            raise DomainError(f"overlap outside the tabulated range [0, {self.m_max}]")
        return self._gain(m)


def _series_energy(spec: ActivationSpec, k_max: int = 60):
    exp = hermite_coeffs(spec, k_max, warn=False)
    c = np.asarray(exp.coeffs)
    k = np.arange(c.size)
    weights = c**2 / np.array([math.factorial(int(i)) for i in k], dtype=float)
    weights[0] = 0.0  # the constant term does not depend on m
    return weights


def free_entropy(m, alpha: float, model: SingleIndexModel, mode: str = "exact", table: PsiOutTable | None = None):
    """Replica-symmetric free entropy at overlap ``m``.

    ``exact``: ``m + log(1-m) + 2 alpha psi_out(m)`` (from ``table`` when one
    is supplied, in which case the m-independent constant ``psi_out(0)`` is
    dropped). ``small-snr``: ``m + log(1-m) + alpha snr sum_k c_k^2 m^k / k!``
    with the constant term removed, so the value at m = 0 is 0.
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr >= 1) or np.any(m_arr < 0):
        raise DomainError("overlap must lie in [0, 1)", where=float(np.max(m_arr)))
    base = m_arr + np.log1p(-m_arr)
    if mode in ("small-snr", "small-lambda"):
        w = _series_energy(model.activation)
        series = np.polynomial.polynomial.polyval(m_arr, w)
        out = base + alpha * model.snr * series
    elif mode == "exact":
        if table is not None:
            out = base + 2 * alpha * table(m_arr)
        else:
            psi = label_entropy(model) + np.vectorize(lambda x: psi_out_gain(float(x), model))(m_arr)
            out = base + 2 * alpha * psi
    else:
        raise ValidationError(f"unknown free-entropy mode {mode!r}")
    return out if out.ndim else float(out)


def _recovers(alpha, model, mode, table, m_max):
    arg, _ = maximize_unimodal_1d(
        lambda m: free_entropy(m, alpha, model, mode, table), 0.0, m_max, tol=1e-10
    )
    return arg > WEAK_RECOVERY_OVERLAP


def it_threshold(
    model: SingleIndexModel,
    alpha_lo: float,
    alpha_hi: float,
    mode: str = "exact",
    rtol: float = 1e-3,
    table: PsiOutTable | None = None,
) -> float:
    """Information-theoretic weak-recovery threshold by bisection in log(alpha).

    Weak recovery at ``alpha`` means the global maximizer of the free
    entropy exceeds ``WEAK_RECOVERY_OVERLAP``.
    """
    if not 0 < alpha_lo < alpha_hi:
        raise ValidationError("need 0 < alpha_lo < alpha_hi")
    m_max = 0.99
    if mode == "exact" and table is None:
        table = PsiOutTable(model, m_max=m_max)
    if table is not None:
        m_max = table.m_max
    if _recovers(alpha_lo, model, mode, table, m_max):
        raise BracketingError(f"already recovering at alpha_lo={alpha_lo!r}")
    if not _recovers(alpha_hi, model, mode, table, m_max):
        raise BracketingError(f"no recovery at alpha_hi={alpha_hi!r}")
    lo, hi = math.log(alpha_lo), math.log(alpha_hi)
    while hi - lo > rtol / 4:
        mid = 0.5 * (lo + hi)
        if _recovers(math.exp(mid), model, mode, table, m_max):
            hi = mid
        else:
            lo = mid
    return math.exp(0.5 * (lo + hi))


def it_bounds(spec: ActivationSpec, m_hat: float = M_HAT) -> tuple[float, float]:
    """Constants ``(D, C)`` with D / snr <= alpha_it <= C / snr for small snr.

    ``D`` is the infimum over m of ``(-m - log(1-m)) / S(m)`` with
    ``S(m) = sum_{k>=1} c_k^2 m^k / k!``; ``C`` is the same ratio's
    numerator ``-log(1-m_hat)`` over ``S(m_hat)``.
    """
    w = _series_energy(spec)
    if w[1:].sum() <= 1e-12 * max(w.sum(), 1.0):
        raise ValidationError("activation has no Hermite energy beyond the constant term")

    def ratio(m):
        return (-m - np.log1p(-m)) / np.polynomial.polynomial.polyval(m, w)

    if w[1] > 0:
        d = 0.0
    else:
        _, neg = maximize_unimodal_1d(lambda m: -ratio(m), 1e-6, 1 - 1e-9)
        d = float(-neg)
        if w[2] > 0:
            d = min(d, 1.0 / (2.0 * w[2]))
    c = -math.log(1 - m_hat) / float(np.polynomial.polynomial.polyval(m_hat, w))
    return d, c


# ---------------------------------------------------------------------------
# sweeps


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _fmt(v):
    if v is None:
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.16e}"


@dataclass
class ThresholdCurve:
    """Sweep of (control value, alpha_alg, alpha_it) with method notes."""

    control: str
    points: list[tuple[float, float, float | None]]
    method: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.control not in ("lambda", "p", "k"):
            raise ValidationError("control must be 'lambda', 'p' or 'k'")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["control", "alpha_alg", "alpha_it", "method"])
        tag = ";".join(f"{k}={v}" for k, v in sorted(self.method.items()))
        for c, a, b in self.points:
            writer.writerow([_fmt(c), _fmt(a), _fmt(b), tag])
        return buf.getvalue()

    def slope(self, which: str = "alg") -> float:
        idx = 1 if which == "alg" else 2
        pts = [(p[0], p[idx]) for p in self.points if p[idx] is not None and math.isfinite(p[idx])]
        return loglog_slope([p[0] for p in pts], [p[1] for p in pts])


def threshold_curve(spec: ActivationSpec, snrs: Sequence[float], with_it: bool = False,
                    tol: float = 1e-9, map_fn=map) -> ThresholdCurve:
    """Threshold curve over a grid of snr values.

    ``map_fn`` lets callers plug in a process pool; results keep grid order.
    """
    snrs = [float(s) for s in snrs]
    algs = list(map_fn(_alg_point, [(spec, s, tol) for s in snrs]))
    its: list = [None] * len(snrs)
    if with_it:
        its = list(map_fn(_it_point, [(spec, s, a) for s, a in zip(snrs, algs)]))
    method = {"alg": "gl-panels", "tol": f"{tol:g}"}
    if with_it:
        method.update(it="psi-table", m_hat=M_HAT, overlap_cut=WEAK_RECOVERY_OVERLAP)
    return ThresholdCurve("lambda", list(zip(snrs, algs, its)), method)


def _alg_point(args):
    spec, snr, tol = args
    return alg_threshold(SingleIndexModel(spec, snr), tol)


def _it_point(args):
    spec, snr, alpha_alg = args
    model = SingleIndexModel(spec, snr)
    hi = alpha_alg * 1.5 if math.isfinite(alpha_alg) else 1e3 / snr
    return it_threshold(model, hi * 1e-3, hi)
