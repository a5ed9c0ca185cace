"""Activation functions, Hermite analysis and the noise sensitivity exponent.

An activation is either a closed form from the registry or a polynomial
given by its coefficients in the Hermite basis, ``sigma = sum_k a_k He_k``.
Hermite *coefficients* in the analysis sense are ``c_k = E[sigma He_k] =
k! a_k``; both conventions appear below and are named accordingly.

The noise sensitivity exponent is the smallest ``beta >= 1`` with
``mu_beta = E[sigma(z)^beta (z^2 - 1)] != 0``. Exact zeros are not decidable
in floating point, so a value counts as zero when it is below
``zero_tol * E[|sigma|^beta (z^2 + 1)]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e as H

from .errors import (
    CapabilityError,
    ConstructionError,
    DegenerateConstructionError,
    ValidationError,
)
from .numerics import (
    QuadratureRule,
    bisect_root,
    gauss_hermite_rule,
    min_eigenvalue_symmetric,
    normal_panel_rule,
)

__all__ = [
    "ActivationSpec",
    "HermiteExpansion",
    "NseResult",
    "HMatrix",
    "REGISTRY",
    "get_activation",
    "from_hermite_basis",
    "mix",
    "expectation_rule",
    "hermite_coeffs",
    "information_exponent",
    "mu_beta",
    "nse_scale",
    "nse",
    "triple_hermite",
    "build_h_matrix",
    "appendix_c_table",
    "construct_beta3",
    "construct_beta4",
    "ZERO_TOL",
    "BETA_CAP",
]

ZERO_TOL = 1e-8
BETA_CAP = 8
DEFAULT_GH_ORDER = 201
MAX_H_MATRIX = 14


# ---------------------------------------------------------------------------
# representation


def _tanh(z):
    return np.tanh(z)


def _abs_centered(z):
    return np.abs(z) - math.sqrt(2.0 / math.pi)


_CLOSED_FORMS: dict[str, tuple[Callable, str, int, tuple, bool, bool]] = {
    # name: (function, parity, growth degree, kinks, centered, unit variance)
    "tanh": (_tanh, "odd", 0, (), True, False),
    "abs": (_abs_centered, "even", 1, (0.0,), True, False),
}


@dataclass(frozen=True)
class ActivationSpec:
    """An activation function with parity and growth metadata.

    Exactly one of ``basis`` (Hermite-basis coefficients of a polynomial) or
    a closed-form ``name`` from the registry determines the values;
    ``scale`` multiplies either. Polynomials built from the registry keep
    their name so they serialize compactly.
    """

    name: str | None
    basis: tuple[float, ...] | None
    parity: str
    growth_degree: int
    centered: bool
    unit_variance: bool
    scale: float = 1.0
    params: tuple = ()
    kinks: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.parity not in ("even", "odd", "none"):
            raise ValidationError(f"unknown parity {self.parity!r}")
        if self.basis is None and self.name not in _CLOSED_FORMS:
            raise ValidationError(f"activation {self.name!r} has neither coefficients nor a closed form")
        if self.basis is not None:
            object.__setattr__(self, "basis", tuple(float(a) for a in self.basis))
        if self.growth_degree < 0:
            raise ValidationError("growth degree must be non-negative")

    @property
    def is_polynomial(self) -> bool:
        return self.basis is not None

    @property
    def degree(self) -> int | None:
        if self.basis is None:
            return None
        nz = [k for k, a in enumerate(self.basis) if a != 0.0]
        return nz[-1] if nz else 0

    @property
    def label(self) -> str:
        if self.name:
            if self.params:
                inner = ",".join(f"{k}={v:g}" for k, v in self.params)
                return f"{self.name}({inner})"
            return self.name
        return f"poly{self.degree}"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.basis is not None:
            out = H.hermeval(z, np.asarray(self.basis))
        else:
            out = _CLOSED_FORMS[self.name][0](z)
        if self.scale != 1.0:
            out = self.scale * out
        return out

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.basis is not None:
            return self.scale * H.hermeval(z, H.hermeder(np.asarray(self.basis)))
        h = 1e-6 * np.maximum(1.0, np.abs(z))
        return (self(z + h) - self(z - h)) / (2 * h)

    def scaled(self, factor: float) -> "ActivationSpec":
        """Return ``factor * sigma``. Unit variance survives only for |factor| = 1."""
        factor = float(factor)
        if factor == 0:
            raise ValidationError("scaling by zero gives a degenerate activation")
        return ActivationSpec(
            self.name, self.basis, self.parity, self.growth_degree, self.centered,
            self.unit_variance and abs(factor) == 1.0, self.scale * factor, self.params, self.kinks,
        )

    def normalized(self) -> "ActivationSpec":
        """Rescale to unit variance (does not center)."""
        v = second_moment(self) - (mean(self) ** 2 if not self.centered else 0.0)
        out = self.scaled(1.0 / math.sqrt(v))
        return _replace(out, unit_variance=True)

    # serialization --------------------------------------------------------
    def to_json(self) -> dict:
        d: dict = {}
        if self.name in REGISTRY and self.name not in _CONSTRUCTED:
            d["name"] = self.name
            if self.params:
                d["params"] = dict(self.params)
            if self.scale != 1.0:
                d["scale"] = self.scale
        else:
            if self.name:
                d["name"] = self.name
            d["coeffs"] = [float(a) * self.scale for a in self.basis]
        d.update(parity=self.parity, growth_degree=self.growth_degree,
                 centered=self.centered, unit_variance=self.unit_variance)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ActivationSpec":
        known = {"name", "params", "scale", "coeffs", "parity", "growth_degree",
                 "centered", "unit_variance"}
        extra = set(obj) - known
        if extra:
            raise ValidationError(f"unknown activation keys: {sorted(extra)}")
        if "coeffs" in obj:
            spec = from_hermite_basis(obj["coeffs"], name=obj.get("name"))
        elif "name" in obj:
            spec = get_activation(obj["name"], **obj.get("params", {}))
            if "scale" in obj:
                spec = spec.scaled(obj["scale"])
                if obj.get("unit_variance"):
                    spec = _replace(spec, unit_variance=True)
        else:
            raise ValidationError("activation needs either 'name' or 'coeffs'")
        for key in ("parity", "growth_degree", "centered", "unit_variance"):
            if key in obj and obj[key] != getattr(spec, key):
                raise ValidationError(
                    f"declared {key}={obj[key]!r} disagrees with the activation ({getattr(spec, key)!r})"
                )
        return spec

    def check_metadata(self, tol: float = 1e-10) -> list[str]:
        """Return the list of violated metadata invariants (empty if consistent)."""
        problems = []
        exp = hermite_coeffs(self, 12, warn=False)
        c = np.asarray(exp.coeffs)
        if self.parity == "even" and np.any(np.abs(c[1::2]) > tol):
            problems.append("odd Hermite coefficients of an even activation")
        if self.parity == "odd" and np.any(np.abs(c[0::2]) > tol):
            problems.append("even Hermite coefficients of an odd activation")
        zs = np.linspace(-20, 20, 4001)
        vals = np.abs(self(zs))
        ratio = vals / (1 + np.abs(zs) ** self.growth_degree)
        inner = ratio[np.abs(zs) <= 10].max()
        if not np.all(np.isfinite(vals)) or max(ratio[0], ratio[-1]) > 4 * max(inner, 1e-300):
            problems.append("growth bound fails on [-20, 20]")
        if self.basis is not None and self.degree > self.growth_degree:
            problems.append("polynomial degree exceeds declared growth degree")
        if self.centered and abs(c[0]) >= 1e-10:
            problems.append("not centered")
        if self.unit_variance and abs(second_moment(self) - c[0] ** 2 - 1) >= 1e-8:
            problems.append("not unit variance")
        return problems


def _replace(spec, **changes):
    from dataclasses import replace

    return replace(spec, **changes)


def from_hermite_basis(basis, name: str | None = None, params: tuple = ()) -> ActivationSpec:
    """Polynomial activation ``sum_k basis[k] He_k`` with metadata inferred."""
    a = np.asarray(basis, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValidationError("Hermite basis coefficients must be a non-empty vector")
    nz = np.nonzero(a)[0]
    degree = int(nz[-1]) if nz.size else 0
    a = a[: degree + 1]
    if np.all(a[1::2] == 0):
        parity = "even"
    elif np.all(a[0::2] == 0):
        parity = "odd"
    else:
        parity = "none"
    k = np.arange(a.size)
    fact = np.array([math.factorial(int(i)) for i in k], dtype=float)
    var = float(np.sum(a[1:] ** 2 * fact[1:]))
    centered = bool(abs(a[0]) < 1e-10)
    unit = bool(abs(var - 1.0) < 1e-8)
    return ActivationSpec(name, tuple(a), parity, degree, centered, unit, 1.0, params)


def _he(k, normalized=False):
    a = np.zeros(k + 1)
    a[k] = 1.0 / math.sqrt(math.factorial(k)) if normalized else 1.0
    return a


def mix(a: float, b: float) -> ActivationSpec:
    """``a He_2 + b He_4``."""
    basis = np.zeros(5)
    basis[2], basis[4] = a, b
    return from_hermite_basis(basis, name="mix", params=(("a", float(a)), ("b", float(b))))


def _closed(name):
    f, parity, growth, kinks, centered, unit = _CLOSED_FORMS[name]
    return ActivationSpec(name, None, parity, growth, centered, unit, 1.0, (), kinks)


_CONSTRUCTED = ("beta3", "beta4")

REGISTRY: dict[str, Callable[..., ActivationSpec]] = {
    "he2": lambda: from_hermite_basis(_he(2), "he2"),
    "he4": lambda: from_hermite_basis(_he(4), "he4"),
    "he6": lambda: from_hermite_basis(_he(6), "he6"),
    "he2n": lambda: from_hermite_basis(_he(2, True), "he2n"),
    "he4n": lambda: from_hermite_basis(_he(4, True), "he4n"),
    "he6n": lambda: from_hermite_basis(_he(6, True), "he6n"),
    "z": lambda: from_hermite_basis([0.0, 1.0], "z"),
    "z2": lambda: from_hermite_basis([1.0, 0.0, 1.0], "z2"),
    "tanh": lambda: _closed("tanh"),
    "abs": lambda: _closed("abs"),
    "mix": mix,
    "beta3": lambda: construct_beta3(),
    "beta4": lambda: construct_beta4(),
}


def get_activation(name: str, **params) -> ActivationSpec:
    """Look up a registry activation by name (``mix`` takes ``a`` and ``b``)."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValidationError(f"unknown activation {name!r}; known: {sorted(REGISTRY)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# expectations


def expectation_rule(spec: ActivationSpec, degree: int = 0, power: int = 1) -> QuadratureRule:
    """Quadrature rule for E[sigma(z)^power * q(z)] with q a polynomial of ``degree``.

    Polynomials get a Gauss-Hermite rule that is exact for the integrand.
    Smooth closed forms use order 201; closed forms with kinks use composite
    Gauss-Legendre panels split at the kinks.
    """
    if spec.is_polynomial:
        total = power * spec.degree + degree
        order = max(total // 2 + 2, 8)
        if order > 1024:
            raise CapabilityError(f"integrand degree {total} needs more than 1024 nodes")
        return gauss_hermite_rule(order)
    if spec.kinks:
        return normal_panel_rule(kinks=spec.kinks)
    return gauss_hermite_rule(DEFAULT_GH_ORDER)


def mean(spec: ActivationSpec) -> float:
    return expectation_rule(spec).expect(spec)


def second_moment(spec: ActivationSpec) -> float:
    if spec.is_polynomial:
        a = np.asarray(spec.basis) * spec.scale
        fact = np.array([math.factorial(k) for k in range(a.size)], dtype=float)
        return float(np.sum(a**2 * fact))
    return expectation_rule(spec, power=2).expect(lambda z: spec(z) ** 2)


def _he_values(k_max, z):
    """He_0..He_k_max at z via the three-term recurrence; shape (k_max+1, n)."""
    out = np.empty((k_max + 1, z.size))
    out[0] = 1.0
    if k_max >= 1:
        out[1] = z
    for k in range(1, k_max):
        out[k + 1] = z * out[k] - k * out[k - 1]
    return out


@dataclass(frozen=True)
class HermiteExpansion:
    """Hermite coefficients ``c_k = E[sigma He_k]`` for k = 0..k_max."""

    coeffs: tuple[float, ...]
    k_max: int
    second_moment: float
    tail_residual: float
    warning: str | None = None

    def energy(self, start: int = 1) -> float:
        """sum_{k >= start} c_k^2 / k!."""
        return float(sum(c * c / math.factorial(k) for k, c in enumerate(self.coeffs) if k >= start))

    def __getitem__(self, k):
        return self.coeffs[k] if k < len(self.coeffs) else 0.0


def hermite_coeffs(spec: ActivationSpec, k_max: int = 30, warn: bool = True) -> HermiteExpansion:
    """Hermite coefficients by quadrature (exact for polynomials).

    A truncation note is attached (and warned unless ``warn=False``) when the
    coefficients up to ``k_max`` miss more than 1e-4 of E[sigma^2].
    """
    k_max = int(k_max)
    if not 0 <= k_max <= 60:
        raise ValidationError("k_max must lie in [0, 60]")
    if spec.is_polynomial:
        a = np.zeros(max(k_max + 1, len(spec.basis)))
        a[: len(spec.basis)] = np.asarray(spec.basis) * spec.scale
        c = np.array([math.factorial(k) * a[k] for k in range(k_max + 1)])
    else:
        rule = expectation_rule(spec, degree=k_max)
        vals = spec(rule.nodes) * rule.weights
        c = _he_values(k_max, rule.nodes) @ vals
    if spec.parity == "even":
        c[1::2] = 0.0
    elif spec.parity == "odd":
        c[0::2] = 0.0
    m2 = second_moment(spec)
    captured = sum(ck * ck / math.factorial(k) for k, ck in enumerate(c))
    tail = m2 - captured
    note = None
    if tail > 1e-4 * m2:
        note = f"expansion truncated at k={k_max} leaves {tail:.3g} of E[sigma^2]={m2:.3g}"
        if warn:
            warnings.warn(note, RuntimeWarning, stacklevel=2)
    return HermiteExpansion(tuple(float(x) for x in c), k_max, float(m2), float(tail), note)


def information_exponent(spec: ActivationSpec, zero_tol: float = ZERO_TOL, cap: int = 30) -> int | None:
    """Degree of the first non-negligible Hermite coefficient (k >= 1).

    ``None`` when every coefficient up to ``cap`` is below tolerance.
    Negligible means ``|c_k| < zero_tol * E[|sigma He_k|]``.
    """
    rule = expectation_rule(spec, degree=cap)
    sig = spec(rule.nodes)
    he = _he_values(cap, rule.nodes)
    coeffs = hermite_coeffs(spec, cap, warn=False).coeffs
    for k in range(1, cap + 1):
        scale = float(np.dot(rule.weights, np.abs(sig * he[k])))
        if scale > 0 and abs(coeffs[k]) >= zero_tol * scale:
            return k
    return None


def mu_beta(spec: ActivationSpec, beta: int) -> float:
    """E[sigma(z)^beta (z^2 - 1)]."""
    beta = int(beta)
    if beta < 1:
        raise ValidationError("beta must be a positive integer")
    rule = expectation_rule(spec, degree=2, power=beta)
    s = spec(rule.nodes)
    return float(np.dot(rule.weights, s**beta * (rule.nodes**2 - 1)))


def nse_scale(spec: ActivationSpec, beta: int) -> float:
    """E[|sigma|^beta (z^2 + 1)], the yardstick of the relative zero test."""
    rule = expectation_rule(spec, degree=2, power=beta)
    s = np.abs(spec(rule.nodes))
    return float(np.dot(rule.weights, s**beta * (rule.nodes**2 + 1)))


@dataclass(frozen=True)
class NseResult:
    """Outcome of the exponent search.

    ``beta_star`` is None when no exponent up to ``beta_cap`` qualifies; such
    activations are candidates for an infinite exponent.
    """

    beta_star: int | None
    mu: tuple[float, ...]
    scales: tuple[float, ...]
    zero_tol: float
    beta_cap: int

    @property
    def cap_exceeded(self) -> bool:
        return self.beta_star is None

    @property
    def mu_star(self) -> float:
        if self.beta_star is None:
            raise ValidationError("exponent exceeds the cap; no leading moment")
        return self.mu[self.beta_star - 1]


def nse(spec: ActivationSpec, zero_tol: float = ZERO_TOL, beta_cap: int = BETA_CAP) -> NseResult:
    """Noise sensitivity exponent with the relative zero test."""
    mus, scales = [], []
    for beta in range(1, int(beta_cap) + 1):
        m = mu_beta(spec, beta)
        s = nse_scale(spec, beta)
        mus.append(m)
        scales.append(s)
        if s > 0 and abs(m) >= zero_tol * s:
            return NseResult(beta, tuple(mus), tuple(scales), zero_tol, int(beta_cap))
    return NseResult(None, tuple(mus), tuple(scales), zero_tol, int(beta_cap))


# ---------------------------------------------------------------------------
# triple products and the quadratic form of mu_2


def triple_hermite(k: int, h: int, j: int) -> int:
    """E[He_k He_h He_j] in closed form (an integer)."""
    k, h, j = int(k), int(h), int(j)
    if min(k, h, j) < 0:
        raise ValidationError("Hermite degrees must be non-negative")
    total = k + h + j
    if total % 2:
        return 0
    s = total // 2
    if s < k or s < h or s < j:
        return 0
    f = math.factorial
    return f(k) * f(h) * f(j) // (f(s - k) * f(s - h) * f(s - j))


@dataclass(frozen=True)
class HMatrix:
    """``entries[k-1, h-1] = E[He_2 He_{2k} He_{2h}]`` for k, h = 1..m.

    For an even centered activation with Hermite-basis coefficients
    ``a_{2k}``, ``mu_2 = a^T H a``. Activations with ``mu_1 = 0`` have no He_2
    component, so the relevant form is :meth:`he2_free_block` (k >= 2).
    """

    m: int
    entries: np.ndarray

    def he2_free_block(self) -> np.ndarray:
        return self.entries[1:, 1:]

    def min_eigenvalue(self) -> float:
        return min_eigenvalue_symmetric(self.entries)

    def he2_free_min_eigenvalue(self) -> float | None:
        """Smallest eigenvalue on activations without He_2 (None for m = 1)."""
        block = self.he2_free_block()
        return min_eigenvalue_symmetric(block) if block.size else None


def build_h_matrix(m: int) -> HMatrix:
    """Tridiagonal matrix of E[He_2 He_2k He_2h] (diagonal 4k(2k)!, off-diagonal (2 max)!)."""
    m = int(m)
    if m < 1:
        raise ValidationError("m must be a positive integer")
    if m > MAX_H_MATRIX:
        raise CapabilityError(f"m={m} exceeds {MAX_H_MATRIX}; entries lose exactness in double precision")
    M = np.zeros((m, m))
    f = math.factorial
    for k in range(1, m + 1):
        M[k - 1, k - 1] = 4 * k * f(2 * k)
        if k < m:
            M[k - 1, k] = M[k, k - 1] = f(2 * (k + 1))
    for k in range(1, m + 1):
        for h in range(max(1, k - 1), min(m, k + 1) + 1):
            if M[k - 1, h - 1] != triple_hermite(2, 2 * k, 2 * h):
                raise ConstructionError(f"closed form disagrees with triple product at ({k},{h})")
    M.flags.writeable = False
    return HMatrix(m, M)


def appendix_c_table(ms) -> list[dict]:
    """Smallest eigenvalues of the full matrix and of the He_2-free block per m."""
    rows = []
    for m in ms:
        hm = build_h_matrix(m)
        block = hm.he2_free_min_eigenvalue()
        rows.append({
            "m": m,
            "min_eig_full": hm.min_eigenvalue(),
            "min_eig_he2_free": block,
            "positive_definite": block is None or block > 0,
        })
    return rows


# ---------------------------------------------------------------------------
# constructions
#
# For even activations without He_0 and He_2 components, mu_2 is the
# quadratic form of the He_2-free block and vanishes on a cone. Up to degree
# 28 the block has exactly one negative eigenvalue, so the cone has two
# sheets and -sigma always lies on the sheet opposite to sigma.


def _block_to_basis(vec):
    """Map coefficients on He_4, He_6, ... to a full Hermite-basis vector."""
    basis = np.zeros(2 * (len(vec) + 1) + 1)
    basis[4::2] = vec
    return basis


def _quadratic_form(block, x, y=None):
    return float(x @ block @ (x if y is None else y))


def _negative_direction(block):
    w, V = np.linalg.eigh(block)
    if w[0] >= 0:
        raise ConstructionError("the mu_2 form has no negative direction at this degree")
    neg = V[:, 0]
    return neg * np.sign(neg[np.argmax(np.abs(neg))])


def _from_block(vec, name):
    spec = from_hermite_basis(_block_to_basis(vec)).normalized()
    return _replace(from_hermite_basis(np.asarray(spec.basis) * spec.scale, name=name),
                    unit_variance=True)


def _verify(spec, expected, what):
    res = nse(spec)
    if res.beta_star != expected:
        raise ConstructionError(
            f"{what}: expected exponent {expected}, got {res.beta_star}; "
            f"mu={res.mu}, scales={res.scales}"
        )
    return res


@lru_cache(maxsize=None)
def construct_beta3(root: str = "positive", plus_degree: int = 4, max_degree: int = 20) -> ActivationSpec:
    """Even polynomial of degree ``max_degree`` with noise sensitivity exponent 3.

    Mixes He_{plus_degree} (default He_4, a direction where mu_2 is
    positive) with the eigenvector of the negative eigenvalue of the
    He_2-free block, choosing the weight that makes mu_2 vanish. ``root``
    selects one of the two solutions of that quadratic. The result is scaled
    to unit variance. Degree 20 is the smallest degree where this works.
    """
    if root not in ("positive", "negative"):
        raise ValidationError("root must be 'positive' or 'negative'")
    if max_degree % 2 or not 20 <= max_degree <= 2 * MAX_H_MATRIX:
        raise ValidationError(f"max_degree must be even and within [20, {2 * MAX_H_MATRIX}]")
    if plus_degree % 2 or not 4 <= plus_degree <= max_degree:
        raise ValidationError("plus_degree must be an even degree between 4 and max_degree")
    block = build_h_matrix(max_degree // 2).he2_free_block()
    neg = _negative_direction(block)
    pos = np.zeros(block.shape[0])
    pos[plus_degree // 2 - 2] = 1.0 / math.factorial(plus_degree)
    a = _quadratic_form(block, pos)
    b = _quadratic_form(block, neg)
    c = _quadratic_form(block, pos, neg)
    disc = math.sqrt(c * c - a * b)
    t = (-c + disc) / a if root == "positive" else (-c - disc) / a
    spec = _from_block(t * pos + neg, "beta3")
    _verify(spec, 3, "beta3 construction")
    return spec


def _on_cone(block, x, pos, neg):
    """Move x along a fixed direction until the form ``block`` vanishes.

    Uses the negative direction when the form is positive and the positive
    one otherwise; the root of smaller magnitude keeps paths continuous.
    """
    q = _quadratic_form(block, x)
    if q == 0.0:
        return x
    u = neg if q > 0 else pos
    qu = _quadratic_form(block, u)
    bu = _quadratic_form(block, x, u)
    disc = math.sqrt(bu * bu - q * qu)
    denom = bu + math.copysign(disc, bu) if bu != 0 else disc
    return x - (q / denom) * u


def _block_coords(spec, m):
    basis = np.zeros(2 * m + 1)
    src = np.asarray(spec.basis) * spec.scale
    basis[: src.size] = src
    return basis[4::2].copy()


def _check_cone_input(spec):
    if not spec.is_polynomial or spec.parity != "even":
        raise ValidationError("inputs must be even polynomials")
    src = np.asarray(spec.basis)
    if src[0] != 0 or (src.size > 2 and src[2] != 0):
        raise ValidationError("inputs must have no He_0 or He_2 component")
    if spec.degree > 2 * MAX_H_MATRIX:
        raise CapabilityError(f"degree {spec.degree} exceeds {2 * MAX_H_MATRIX}")


@lru_cache(maxsize=None)
def _default_beta4():
    # At degree 20 every exponent-3 polynomial on one sheet of the cone has
    # the same mu_3 sign, so no path between opposite signs stays away from
    # zero. At degree 22 one sheet carries both signs; these two
    # constructions sit on it.
    first = construct_beta3("positive", 4, 22)
    second = construct_beta3("positive", 22, 22)
    return construct_beta4(first, second)


def construct_beta4(plus: ActivationSpec | None = None, minus: ActivationSpec | None = None) -> ActivationSpec:
    """Even polynomial with noise sensitivity exponent 4.

    Inputs are two exponent-3 polynomials whose mu_3 differ in sign (order
    does not matter); with no inputs a degree-22 default pair is used. A
    plain combination ``t * plus + (1 - t) * minus`` leaves the set
    ``mu_2 = 0``, so each point of the path is pulled back onto that set
    before mu_3 is evaluated. Bisection on ``t`` cancels mu_3, and the result
    must show a non-vanishing mu_4.

    Raises
    ------
    ValidationError
        Inputs with the same mu_3 sign, or not exponent 3.
    DegenerateConstructionError
        mu_3 only changes sign by jumping between the two sheets of the
        cone (as for ``minus = -plus``), the path meets the zero function,
        or mu_4 vanishes as well.
    """
    if plus is None and minus is None:
        return _default_beta4()
    if plus is None or minus is None:
        raise ValidationError("pass both inputs or neither")
    for spec in (plus, minus):
        _check_cone_input(spec)
    r_plus, r_minus = nse(plus), nse(minus)
    if r_plus.beta_star != 3 or r_minus.beta_star != 3:
        raise ValidationError("both inputs must have noise sensitivity exponent 3")
    if np.sign(r_plus.mu[2]) == np.sign(r_minus.mu[2]):
        raise ValidationError("inputs must have mu_3 of opposite signs")
    if r_plus.mu[2] < 0:
        plus, minus = minus, plus
    m = max(plus.degree, minus.degree, 20) // 2
    block = build_h_matrix(m).he2_free_block()
    neg = _negative_direction(block)
    pos = np.zeros(block.shape[0])
    pos[0] = 1.0
    xp, xm = _block_coords(plus, m), _block_coords(minus, m)
    xp /= np.linalg.norm(xp)
    xm /= np.linalg.norm(xm)

    def path(t):
        return _on_cone(block, t * xp + (1 - t) * xm, pos, neg)

    def normalized_mu(t, beta):
        x = path(t)
        norm = np.linalg.norm(x)
        if norm < 1e-12:
            return 0.0
        spec = from_hermite_basis(_block_to_basis(x / norm))
        return mu_beta(spec, beta) / nse_scale(spec, beta)

    t = bisect_root(lambda t: normalized_mu(t, 3), 0.0, 1.0, tol=1e-15)
    x = path(t)
    if np.linalg.norm(x) < 1e-9:
        raise DegenerateConstructionError(f"the path meets the zero function at t={t:.6g}")
    spec = _from_block(x, "beta4")
    res = nse(spec)
    if res.beta_star == 3:
        left = normalized_mu(max(t - 1e-9, 0.0), 3)
        right = normalized_mu(min(t + 1e-9, 1.0), 3)
        raise DegenerateConstructionError(
            f"mu_3 jumps from {left:.3g} to {right:.3g} at t={t:.6g} instead of crossing zero: "
            "the inputs lie on opposite sheets of the mu_2 = 0 cone"
        )
    if res.beta_star is None or res.beta_star > 4:
        raise DegenerateConstructionError(f"mu_4 vanishes together with mu_1..mu_3 at t={t:.6g}; mu={res.mu}")
    if res.beta_star != 4:
        raise ConstructionError(f"construction verified exponent {res.beta_star}; mu={res.mu}")
    return spec
