"""Committee machines: ``y = p^{-1/2} sum_k sigma(w_k . x) + sqrt(noise) xi``.

Two layers live here. The exact computational threshold at finite width p
needs the label law, built from the density of the sum over the other p-1
hidden units. The large-p analysis works in the committee-symmetric
parametrization of the overlap, ``(q_d, h)``, through an expanded potential
and its state evolution; those formulas are leading order in p.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationSpec, hermite_coeffs, nse
from .errors import DomainError, GridResolutionError, ValidationError
from .numerics import GridDensity, selfconvolve_density
from .single_index import _negligible, SingleIndexModel, label_rule

__all__ = [
    "CommitteeModel",
    "CommitteeOrderParams",
    "SeTrace",
    "CommitteeChannel",
    "committee_label_machinery",
    "committee_alg_threshold",
    "committee_asymptote",
    "gamma_functions",
    "rs_potential",
    "rs_gradient",
    "se_step",
    "run_se",
    "specialization_alg_threshold",
    "Superlinear",
    "overlap_bound",
    "it_specialization_check",
]

SPECIALIZED_ABOVE = 1e-4
UNSPECIALIZED_BELOW = 1e-8
_K_MAX = 60


@dataclass(frozen=True)
class CommitteeModel:
    activation: ActivationSpec
    width: int
    noise: float = 1.0

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 1:
            raise ValidationError(f"width must be a positive integer, got {self.width!r}")
        if not self.noise > 0 or not math.isfinite(self.noise):
            raise ValidationError(f"noise variance must be positive, got {self.noise!r}")
        exp = hermite_coeffs(self.activation, 2, warn=False)
        scale = math.sqrt(max(exp.second_moment, 1e-300))
        if abs(exp[0]) > 1e-8 * max(1.0, scale):
            raise ValidationError("committee activations must be centered (E sigma = 0)")


@dataclass(frozen=True)
class CommitteeOrderParams:
    """Committee-symmetric overlap: diagonal part ``q_d`` and ``h = 1 - q_a - q_d``."""

    q_d: float
    h: float

    def __post_init__(self):
        if not 0 <= self.q_d <= 1:
            raise ValidationError(f"q_d must lie in [0, 1], got {self.q_d!r}")
        if not 0 < self.h <= 1:
            raise ValidationError(f"h must lie in (0, 1], got {self.h!r}")
        # q_d I + (q_a / p) 1 1^T is positive semidefinite iff q_a >= -q_d
        if 1 - self.h < -1e-12:
            raise ValidationError("q_a = 1 - h - q_d must be at least -q_d")

    @property
    def q_a(self) -> float:
        return 1 - self.h - self.q_d


@dataclass
class SeTrace:
    steps: list[tuple[int, float, float]]
    classification: str
    converged: bool
    note: str | None = None

    @property
    def final(self) -> CommitteeOrderParams:
        _, q, h = self.steps[-1]
        return CommitteeOrderParams(q, h)

    def to_csv(self) -> str:
        lines = ["t,q_d,h"]
        lines += [f"{t},{q:.16e},{h:.16e}" for t, q, h in self.steps]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# exact finite-p threshold


@dataclass
class CommitteeChannel:
    """Label density and ``E[z_1^2 - 1 | y]`` tabulated on a uniform y grid."""

    y: np.ndarray
    density: np.ndarray
    conditional: np.ndarray
    step: float
    other_units: GridDensity | None = None

    def Z(self, y):
        return np.interp(y, self.y, self.density, left=0.0, right=0.0)

    def G1(self, y):
        return np.interp(y, self.y, self.conditional, left=0.0, right=0.0)

    def normalization(self) -> float:
        return float(self.density.sum() * self.step)

    def fisher(self) -> float:
        return float(np.sum(self.density * self.conditional**2) * self.step)


def _unit_rule(model: CommitteeModel):
    """Quadrature nodes for one hidden unit and its label contribution ``sigma(z)/sqrt p``."""
    spec, p, noise = model.activation, model.width, model.noise
    # resolving the bumps of phi_noise(v - sigma/sqrt p) is the single-index
    # problem at snr 1 / (p noise)
    snr = 1.0 / (p * noise)
    rule = label_rule(spec, snr, negligible=_negligible(SingleIndexModel(spec, snr), 1e-10))
    live = rule.weights > 1e-18
    nodes, weights = rule.nodes[live], rule.weights[live]
    return nodes, weights / weights.sum(), spec(nodes) / math.sqrt(p)


def _circular(a, b):
    """Convolution of two symmetric-grid arrays, returned on the same grid."""
    n = a.size
    out = np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=n)
    return np.roll(out, -(n // 2))


def committee_label_machinery(model: CommitteeModel, step: float | None = None) -> CommitteeChannel:
    """Build ``Z`` and ``G1`` for the committee label ``y``.

    With ``rho`` the density of the other units' contribution, ``B`` the
    noisy law of one unit and ``A`` the same law weighted by ``z_1^2 - 1``,
    ``Z = rho * B`` and ``G1 = (rho * A) / Z``. Everything lives on one
    symmetric grid; the noise enters as its exact Gaussian filter in
    Fourier space, and ``G1`` is only formed where ``Z`` clears the FFT
    round-off floor.
    """
    nodes, weights, s = _unit_rule(model)
    p, noise = model.width, model.noise
    std_one = math.sqrt(float(weights @ s**2))
    if step is None:
        step = min(math.sqrt(noise) / 64, std_one / 32)
    reach = float(np.abs(s).max()) + 12 * std_one * math.sqrt(p) + 14 * math.sqrt(noise)
    cells = 1 << max(10, math.ceil(math.log2(2 * reach / step)))
    if cells > 1 << 23:
        raise GridResolutionError(f"label grid would need {cells} cells", factor=cells)
    half_width = cells * step / 2
    unit = GridDensity.from_samples(s, weights, half_width, cells)
    h = nodes**2 - 1
    signed = GridDensity._axis(half_width, cells)
    pos = (s - signed[0]) / step
    left = np.minimum(np.floor(pos).astype(np.int64), cells - 2)
    frac = pos - left
    weighted = np.bincount(left, weights * h * (1 - frac), minlength=cells)
    weighted += np.bincount(left + 1, weights * h * frac, minlength=cells)

    omega = 2 * np.pi * np.fft.rfftfreq(cells, d=step)
    blur = np.exp(-0.5 * noise * omega**2)

    def smooth(mass):
        return np.fft.irfft(np.fft.rfft(mass) * blur, n=cells) / step

    B = smooth(unit.mass)
    A = smooth(weighted)
    other = None
    if p > 1:
        other = selfconvolve_density(unit, p - 1)
        B = _circular(other.mass, B)
        A = _circular(other.mass, A)
    y = unit.grid
    floor = 1e-13 * B.max()
    ok = B > floor
    Z = np.where(ok, B, 0.0)
    g = np.divide(A, B, out=np.zeros_like(A), where=ok)
    return CommitteeChannel(y, Z, g, step, other)


def committee_alg_threshold(model: CommitteeModel, step: float | None = None) -> float:
    """Exact computational threshold ``1 / int Z G1^2`` at finite width."""
    res = nse(model.activation)
    if res.cap_exceeded:
        return math.inf
    ch = committee_label_machinery(model, step)
    value = ch.fisher()
    if value < 1e-14:
        warnings.warn(f"vanishing signal; exponent diagnostic beta_star={res.beta_star}", stacklevel=2)
        return math.inf
    return 1.0 / value


def committee_asymptote(spec: ActivationSpec, noise: float) -> tuple[int, float]:
    """Large-p constant: ``alpha ~ constant * p**beta_star``.

    Uses ``constant = sqrt(1 + noise) beta_star! / mu_{beta_star}^2``, stated
    for unit-variance activations. The exact finite-p threshold approaches
    ``(1 + noise)**beta_star beta_star! / mu^2`` instead; both agree as the
    noise vanishes.
    """
    if not noise >= 0:
        raise ValidationError("noise variance must be non-negative")
    exp = hermite_coeffs(spec, 2, warn=False)
    if abs(exp.second_moment - 1) > 1e-6 or abs(exp[0]) > 1e-8:
        raise ValidationError("the large-p constant is defined for centered unit-variance activations")
    res = nse(spec)
    if res.cap_exceeded:
        raise ValidationError(f"exponent exceeds the cap {res.beta_cap}")
    b = res.beta_star
    return b, math.sqrt(1 + noise) * math.factorial(b) / res.mu_star**2


# ---------------------------------------------------------------------------
# expanded potential and state evolution


def _series(spec: ActivationSpec):
    exp = hermite_coeffs(spec, _K_MAX, warn=False)
    c = np.asarray(exp.coeffs)
    fact = np.array([math.factorial(k) for k in range(c.size)], dtype=float)
    energy = c**2 / fact
    variance = exp.second_moment - c[0] ** 2
    return c, energy, variance


def gamma_functions(q: float, spec: ActivationSpec):
    """``(gamma1, gamma2, gamma2_tilde, gamma2_tilde')`` at overlap ``q``.

    ``gamma2(q) = E[sigma^2] - sum_{k>=1} c_k^2 q^k / k!`` (exact at q = 0
    even for a truncated expansion) and ``gamma2_tilde`` removes the linear
    part ``(1 - q) c_1^2``.
    """
    if not 0 <= q <= 1:
        raise DomainError(f"overlap must lie in [0, 1], got {q!r}", where=q)
    c, energy, variance = _series(spec)
    k = np.arange(c.size)
    powers = q ** k
    g1 = (1 - q) * c[1]
    g2 = variance - float(energy[1:] @ powers[1:])
    g2t = g2 - (1 - q) * c[1] ** 2
    deriv = -float(np.sum(energy[2:] * k[2:] * q ** (k[2:] - 1)))
    return g1, g2, g2t, deriv


def _denominator(params, spec):
    _, _, g2t, d = gamma_functions(params.q_d, spec)
    c1sq = hermite_coeffs(spec, 1, warn=False)[1] ** 2
    den = g2t + params.h * c1sq
    return den, d, c1sq


def rs_potential(params: CommitteeOrderParams, alpha: float, model: CommitteeModel) -> float:
    """Committee-symmetric potential to leading order in the width.

    ``(p-1) q_d / 2 + (p-1)/2 log(1-q_d) + (log h - h)/2 - alpha/2 log(gamma2_tilde + h c_1^2)``.
    """
    p = model.width
    den, _, _ = _denominator(params, model.activation)
    if den <= 0:
        raise DomainError("log argument gamma2_tilde + h c_1^2 is not positive (linear activation?)",
                          where=(params.q_d, params.h))
    if params.q_d >= 1:
        raise DomainError("q_d = 1 is outside the potential's domain", where=params.q_d)
    return ((p - 1) * params.q_d / 2 + (p - 1) / 2 * math.log1p(-params.q_d)
            + (math.log(params.h) - params.h) / 2 - alpha / 2 * math.log(den))


def rs_gradient(params: CommitteeOrderParams, alpha: float, model: CommitteeModel) -> tuple[float, float]:
    """Analytic gradient of ``rs_potential`` in ``(q_d, h)``."""
    p = model.width
    den, d, c1sq = _denominator(params, model.activation)
    dq = -(p - 1) * params.q_d / (2 * (1 - params.q_d)) - alpha / 2 * d / den
    dh = (1 - params.h) / (2 * params.h) - alpha / 2 * c1sq / den
    return dq, dh


def se_step(params: CommitteeOrderParams, alpha: float, model: CommitteeModel) -> CommitteeOrderParams:
    """One step of the expanded state evolution.

    Both relations have the form ``x / (1 - x) = r`` and are inverted as
    ``x = r / (1 + r)``.
    """
    if model.width < 2:
        raise ValidationError("the committee state evolution needs width >= 2")
    den, d, c1sq = _denominator(params, model.activation)
    if den <= 0:
        raise DomainError("state-evolution denominator is not positive", where=(params.q_d, params.h))
    r1 = -alpha * d / ((model.width - 1) * den)
    r2 = alpha * c1sq / den
    q_new = r1 / (1 + r1)
    h_new = 1 / (1 + r2)
    # guard the closed-box invariant against rounding
    q_new = min(max(q_new, 0.0), 1 - 1e-16)
    h_new = min(max(h_new, 1e-300), 1.0)
    return CommitteeOrderParams(q_new, h_new)


def _classify(q):
    if q > SPECIALIZED_ABOVE:
        return "specialized"
    if q < UNSPECIALIZED_BELOW:
        return "unspecialized"
    return "undecided"


def _iterate(init, alpha, model, t_max, tol, damping):
    steps = [(0, init.q_d, init.h)]
    cur = init
    prev = None
    for t in range(1, t_max + 1):
        nxt = se_step(cur, alpha, model)
        if damping:
            q = (1 - damping) * nxt.q_d + damping * cur.q_d
            h = (1 - damping) * nxt.h + damping * cur.h
            nxt = CommitteeOrderParams(q, h)
        steps.append((t, nxt.q_d, nxt.h))
        change = max(abs(nxt.q_d - cur.q_d), abs(nxt.h - cur.h))
        if change < tol:
            return steps, True, False
        if prev is not None and max(abs(nxt.q_d - prev.q_d), abs(nxt.h - prev.h)) < tol:
            return steps, False, True
        prev, cur = cur, nxt
    return steps, False, False


def run_se(init: CommitteeOrderParams, alpha: float, model: CommitteeModel,
           t_max: int = 100_000, tol: float = 1e-10) -> SeTrace:
    """Iterate ``se_step`` to convergence and classify the fixed point."""
    if t_max < 1:
        raise ValidationError("t_max must be at least 1")
    if alpha > model.width**1.5:
        warnings.warn("alpha exceeds p^(3/2); the expanded state evolution may not apply", stacklevel=2)
    steps, converged, cycling = _iterate(init, alpha, model, t_max, tol, 0.0)
    note = None
    if cycling:
        steps, converged, cycling = _iterate(init, alpha, model, t_max, tol, 0.5)
        if cycling:
            note = "period-2 oscillation persists with damping 0.5"
            return SeTrace(steps, "undecided", False, note)
        note = "damped with factor 0.5 after a period-2 oscillation"
    return SeTrace(steps, _classify(steps[-1][1]), converged, note)


class Superlinear(enum.Enum):
    """Marker: no linear-in-p specialization threshold (c_2 = 0)."""

    MARKER = "superlinear"


def specialization_alg_threshold(spec: ActivationSpec, zero_tol: float = 1e-8):
    """``alpha / p`` above which the state evolution leaves ``q_d = 0``.

    Returns ``(E[sigma^2] - c_1^2) / c_2^2``, or ``Superlinear.MARKER`` when
    ``c_2`` vanishes.
    """
    c, _, variance = _series(spec)
    nonlinear = variance - c[1] ** 2
    if nonlinear <= zero_tol * max(variance, 1.0):
        raise ValidationError("linear activations do not specialize")
    if abs(c[2]) <= zero_tol * math.sqrt(variance):
        return Superlinear.MARKER
    return float(nonlinear / c[2] ** 2)


def overlap_bound(eps: float, spec: ActivationSpec) -> float:
    """``L(eps, sigma) = sum_l (1-eps)^l sum_{k>l} c_k^2 / k!``, so that gamma2(1-eps) = eps L."""
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    _, energy, _ = _series(spec)
    k = np.arange(energy.size)
    geometric = -np.expm1(k * math.log1p(-eps)) / eps
    return float(energy[1:] @ geometric[1:])


def it_specialization_check(alpha_bar: float, eps: float, spec: ActivationSpec) -> bool:
    """Whether the near-perfect overlap ``(1-eps, eps)`` beats every unspecialized one.

    Compares ``(1 - a log L)/2 + (1 - a)/2 log eps`` with the unspecialized
    ceiling ``-1/2 - a/2 log(E[sigma^2] - c_1^2)``, both per unit width, at
    ``a = alpha / p``.
    """
    if not alpha_bar > 0:
        raise ValidationError("alpha / p must be positive")
    if not 0 < eps < 0.5:
        raise ValidationError("eps must lie in (0, 0.5)")
    c, _, variance = _series(spec)
    specialized = (1 - alpha_bar * math.log(overlap_bound(eps, spec))) / 2 + (1 - alpha_bar) / 2 * math.log(eps)
    ceiling = -0.5 - alpha_bar / 2 * math.log(variance - c[1] ** 2)
    return bool(specialized > ceiling)
