"""Numerical kernels shared by the threshold solvers.

Gaussian quadrature, adaptive line integration, FFT self-convolution of
grid densities, 1-D search and root finding, symmetric eigenvalues.
All expectations use the standard normal measure (probabilist convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg, optimize, special

from .errors import (
    AccuracyError,
    BracketingError,
    CapabilityError,
    DomainError,
    GridResolutionError,
    ValidationError,
)

__all__ = [
    "QuadratureRule",
    "GridDensity",
    "gauss_hermite_rule",
    "normal_panel_rule",
    "integrate_line",
    "selfconvolve_density",
    "min_eigenvalue_symmetric",
    "maximize_unimodal_1d",
    "bisect_root",
    "MAX_HERMITE_ORDER",
    "DEFAULT_GRID_CELLS",
]

MAX_HERMITE_ORDER = 1024
DEFAULT_GRID_CELLS = 2**14
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for expectations under z ~ N(0, 1).

    Attributes
    ----------
    nodes, weights : ndarray
        Sorted abscissas and their weights; weights sum to one.
    kind : str
        ``"gauss-hermite"`` or ``"gauss-legendre-panel"``.
    order : int
        Number of Hermite nodes, or Legendre nodes per panel.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    order: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValidationError("nodes and weights must be 1-D arrays of equal length")
        if nodes.size > 1 and not np.all(np.diff(nodes) > 0):
            raise ValidationError("quadrature nodes must be strictly increasing")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """E[f(z)] for a vectorized ``f``."""
        return float(np.dot(self.weights, f(self.nodes)))


def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Gauss-Hermite rule for the standard normal, exact to degree 2*order-1."""
    order = int(order)
    if order < 1:
        raise ValidationError("quadrature order must be at least 1")
    if order > MAX_HERMITE_ORDER:
        raise CapabilityError(f"Gauss-Hermite order {order} exceeds {MAX_HERMITE_ORDER}")
    return _gauss_hermite_cached(order)


_GH_CACHE: dict[int, QuadratureRule] = {}


def _gauss_hermite_cached(order):
    rule = _GH_CACHE.get(order)
    if rule is None:
        if order == 1:
            x, w = np.zeros(1), np.ones(1)
        else:
            x, w = special.roots_hermitenorm(order)
            w = w / _SQRT_2PI
            # force exact normalization; the raw weights are good to ~1e-15
            w = w / w.sum()
        rule = QuadratureRule(x, w, "gauss-hermite", order)
        _GH_CACHE[order] = rule
    return rule


def normal_panel_rule(
    half_width: float = 12.0,
    panels: int = 480,
    order: int = 8,
    kinks: Sequence[float] = (),
    edges: np.ndarray | None = None,
) -> QuadratureRule:
    """Composite Gauss-Legendre rule against the normal density.

    Panels are uniform on ``[-half_width, half_width]`` with extra breakpoints
    at ``kinks`` so that non-smooth integrands stay piecewise smooth. Pass
    ``edges`` to supply the breakpoints directly. The truncated Gaussian mass
    (about 4e-33 at the default width) is ignored and the weights are
    renormalized to sum to one.
    """
    if edges is None:
        edges = np.linspace(-half_width, half_width, int(panels) + 1)
        extra = [k for k in kinks if -half_width < k < half_width]
        if extra:
            edges = np.union1d(edges, np.asarray(extra, dtype=float))
    edges = np.asarray(edges, dtype=float)
    x, w = leggauss(int(order))
    a, b = edges[:-1, None], edges[1:, None]
    nodes = ((b - a) / 2 * x + (a + b) / 2).ravel()
    weights = ((b - a) / 2 * w).ravel() * np.exp(-0.5 * nodes**2) / _SQRT_2PI
    weights = weights / weights.sum()
    return QuadratureRule(nodes, weights, "gauss-legendre-panel", int(order))


# ---------------------------------------------------------------------------
# line integration

_GL_LO = leggauss(10)
_GL_HI = leggauss(21)


def _panel_estimates(f, a, b):
    """Two Gauss-Legendre estimates per panel, evaluated in one call to f."""
    half = (b - a) / 2
    mid = (a + b) / 2
    xl, wl = _GL_LO
    xh, wh = _GL_HI
    pts = np.concatenate([(mid[:, None] + half[:, None] * xl).ravel(),
                          (mid[:, None] + half[:, None] * xh).ravel()])
    vals = np.asarray(f(pts), dtype=float)
    if vals.shape != pts.shape:
        raise ValidationError("integrand must map an array of abscissas to an array of the same shape")
    if not np.all(np.isfinite(vals)):
        bad = pts[~np.isfinite(vals)][0]
        raise DomainError(f"integrand is not finite at y={bad!r}", where=float(bad))
    n = a.size
    lo = (vals[: n * xl.size].reshape(n, xl.size) @ wl) * half
    hi = (vals[n * xl.size:].reshape(n, xh.size) @ wh) * half
    return hi, np.abs(hi - lo)


def _adaptive(f, edges, tol, floor, budget):
    a = np.asarray(edges[:-1], dtype=float)
    b = np.asarray(edges[1:], dtype=float)
    val, err = _panel_estimates(f, a, b)
    while True:
        total = val.sum()
        target = max(tol * abs(total), floor)
        if err.sum() <= target:
            return total, err.sum(), a.size
        if a.size >= budget:
            raise AccuracyError(
                "adaptive integration exceeded its panel budget",
                estimate=float(total), error_bound=float(err.sum()),
            )
        share = target / a.size
        bad = err > share
        if not bad.any():
            bad = err >= err.max()
        mid = (a[bad] + b[bad]) / 2
        na = np.concatenate([a[bad], mid])
        nb = np.concatenate([mid, b[bad]])
        nv, ne = _panel_estimates(f, na, nb)
        keep = ~bad
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])


def integrate_line(
    f: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-10,
    *,
    center: float = 0.0,
    scale: float = 1.0,
    core: tuple[float, float] | None = None,
    max_panels: int = 20000,
    vectorized: bool = True,
) -> float:
    """Integrate ``f`` over the real line.

    A core interval (default ``center +- 8 scale``) is integrated with
    adaptive 10/21-point Gauss-Legendre panels. The domain is then extended
    on both sides with panels of doubling width until a panel contributes
    less than ``tol`` times the accumulated value.

    Raises
    ------
    AccuracyError
        When the panel budget runs out; ``estimate`` and ``error_bound``
        hold the partial result.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if scale <= 0:
        raise ValidationError("scale must be positive")
    if not vectorized:
        f = np.vectorize(f, otypes=[float])
    lo, hi = core if core is not None else (center - 8 * scale, center + 8 * scale)
    if not lo < hi:
        raise ValidationError("core interval must have lo < hi")
    n0 = 32
    total, errsum, used = _adaptive(f, np.linspace(lo, hi, n0 + 1), tol, 0.0, max_panels)
    floor = tol * abs(total)
    for direction in (+1.0, -1.0):
        start = hi if direction > 0 else lo
        width = 2.0 * scale
        while True:
            stop = start + direction * width
            a, b = (start, stop) if direction > 0 else (stop, start)
            part, perr, n = _adaptive(f, np.linspace(a, b, 5), tol, floor / 8, max_panels - used)
            used += n
            total += part
            errsum += perr
            if abs(part) <= tol * abs(total):
                break
            if used >= max_panels:
                raise AccuracyError("tail extension did not converge",
                                    estimate=float(total), error_bound=float(errsum))
            start = stop
            width *= 2.0
    return float(total)


# ---------------------------------------------------------------------------
# grid densities


@dataclass(frozen=True)
class GridDensity:
    """Probability masses on the uniform grid ``origin + step * j``.

    The grid is symmetric, ``origin = -step * len(mass) / 2``, so index
    ``len(mass) // 2`` sits exactly at zero; this keeps self-convolution an
    integer shift.
    """

    origin: float
    step: float
    mass: np.ndarray
    renormalization: float = field(default=1.0, compare=False)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.ndim != 1 or mass.size < 2:
            raise ValidationError("mass must be a 1-D array with at least two cells")
        if self.step <= 0:
            raise ValidationError("grid step must be positive")
        if np.any(mass < 0):
            raise ValidationError("grid masses must be non-negative")
        total = mass.sum()
        if not (1 - 1e-6 <= total <= 1 + 1e-12):
            raise ValidationError(f"total grid mass {total!r} outside [1-1e-6, 1]")
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)

    @property
    def grid(self) -> np.ndarray:
        return self.origin + self.step * np.arange(self.mass.size)

    @property
    def half_width(self) -> float:
        return -self.origin

    def mean(self) -> float:
        return float(np.dot(self.mass, self.grid))

    def var(self) -> float:
        g = self.grid
        mu = np.dot(self.mass, g)
        return float(np.dot(self.mass, (g - mu) ** 2))

    def std(self) -> float:
        return float(np.sqrt(self.var()))

    def l1_distance(self, other: "GridDensity") -> float:
        if self.mass.size != other.mass.size or not np.isclose(self.step, other.step):
            raise ValidationError("densities live on different grids")
        return float(np.abs(self.mass - other.mass).sum())

    @staticmethod
    def _axis(half_width, cells):
        cells = int(cells)
        if cells % 2:
            raise ValidationError("number of grid cells must be even")
        step = 2.0 * half_width / cells
        return -half_width, step, -half_width + step * np.arange(cells)

    @classmethod
    def from_pdf(cls, pdf, half_width, cells=DEFAULT_GRID_CELLS):
        """Sample a smooth density at the nodes (spectrally accurate for smooth pdfs)."""
        origin, step, x = cls._axis(half_width, cells)
        m = np.clip(np.asarray(pdf(x), dtype=float), 0, None) * step
        return cls(origin, step, m / m.sum())

    @classmethod
    def from_samples(cls, values, weights, half_width, cells=DEFAULT_GRID_CELLS):
        """Deposit weighted point masses with linear (cloud-in-cell) splitting.

        Splitting each point between its two neighbours keeps the total mass
        and the mean exact, and adds at most ``step**2 / 4`` to the variance.
        """
        origin, step, _ = cls._axis(half_width, cells)
        values = np.asarray(values, dtype=float)
        weights = np.asarray(weights, dtype=float)
        pos = (values - origin) / step
        if pos.min() < 0 or pos.max() > cells - 1:
            raise GridResolutionError("samples fall outside the density grid")
        left = np.floor(pos).astype(np.int64)
        left = np.minimum(left, cells - 2)
        frac = pos - left
        m = np.bincount(left, weights * (1 - frac), minlength=cells)
        m += np.bincount(left + 1, weights * frac, minlength=cells)
        m = np.clip(m, 0, None)
        return cls(origin, step, m / m.sum())


def selfconvolve_density(base: GridDensity, times: int) -> GridDensity:
    """Density of the sum of ``times`` independent copies of ``base``.

    The discrete characteristic function is raised to the power ``times``
    (one forward and one inverse real FFT). Ringing below zero is clipped and
    the mass renormalized; the factor is stored on the result.
    """
    times = int(times)
    if times < 1:
        raise ValidationError("times must be a positive integer")
    if times == 1:
        return GridDensity(base.origin, base.step, base.mass.copy(), 1.0)
    n = base.mass.size
    expected_std = np.sqrt(times) * base.std()
    if 10 * expected_std > 2 * base.half_width:
        raise GridResolutionError(
            f"grid half-width {base.half_width:g} too short for a sum with std {expected_std:g}"
        )
    spec = np.fft.rfft(base.mass)
    conv = np.fft.irfft(spec**times, n=n)
    # sum of indices j_1 + ... + j_t lands at (times-1) * n/2 cells past the grid origin
    shift = ((times - 1) * (n // 2)) % n
    conv = np.roll(conv, -shift)
    conv = np.clip(conv, 0, None)
    total = conv.sum()
    factor = 1.0 / total
    if abs(factor - 1) > 1e-4:
        raise GridResolutionError(f"renormalization factor {factor!r} deviates from 1", factor=factor)
    return GridDensity(base.origin, base.step, conv * factor, factor)


# ---------------------------------------------------------------------------
# eigenvalues, search, roots


def min_eigenvalue_symmetric(M) -> float:
    """Smallest eigenvalue of a symmetric matrix (dense LAPACK solve)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError("matrix must be square")
    scale = max(1.0, float(np.abs(M).max())) if M.size else 1.0
    if np.abs(M - M.T).max(initial=0.0) > 1e-12 * scale:
        raise ValidationError("matrix is not symmetric")
    if M.shape[0] == 0:
        raise ValidationError("matrix is empty")
    # the subset drivers lose the small eigenvalues of badly scaled matrices
    # such as the triple-product ones (condition ~1e19); the full solve keeps them
    return float(linalg.eigvalsh(M)[0])


def _checked(f, x):
    v = f(x)
    if not np.isfinite(v):
        raise DomainError(f"objective is not finite at {x!r}", where=float(x))
    return float(v)


def maximize_unimodal_1d(f, lo: float, hi: float, tol: float = 1e-9, grid: int = 2001):
    """Global maximum of a scalar function on ``[lo, hi]``.

    A heuristic global search: the grid scan picks the best cell, bounded
    Brent refinement polishes it. Returns ``(argmax, max)``.
    """
    if not lo < hi:
        raise ValidationError("need lo < hi")
    grid = max(int(grid), 2000)
    xs = np.linspace(lo, hi, grid)
    try:
        vals = np.asarray(f(xs), dtype=float)
        if vals.shape != xs.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([f(x) for x in xs], dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = xs[~np.isfinite(vals)][0]
        raise DomainError(f"objective is not finite at {bad!r}", where=float(bad))
    i = int(np.argmax(vals))
    best_x, best_v = float(xs[i]), float(vals[i])
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, grid - 1)]
    res = optimize.minimize_scalar(
        lambda x: -_checked(f, x), bounds=(a, b), method="bounded",
        options={"xatol": tol},
    )
    if res.success and -res.fun > best_v:
        best_x, best_v = float(res.x), float(-res.fun)
    return best_x, best_v


def bisect_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of ``f`` in a sign-changing bracket, to bracket width ``tol``."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if not np.sign(flo) * np.sign(fhi) < 0:
        raise BracketingError(f"no sign change on [{lo!r}, {hi!r}]")
    return float(optimize.bisect(f, lo, hi, xtol=tol, maxiter=2000))
