"""Finite-dimensional experiments: planted data, spectral estimation, overlap sweeps.

Data follow the asymptotic models at finite ``d``: covariates ``x ~ N(0, I_d)``,
planted rows ``w_k ~ N(0, I_d / d)``, ``n = round(alpha d)``, and labels

* single-index  ``y = sqrt(snr) sigma(w . x) + xi``
* committee     ``y = p^{-1/2} sum_k sigma(w_k . x) + sqrt(noise) xi``
* hierarchical  ``y = sum_k k^{-gamma} sigma(w_k . x) + sqrt(noise) xi``

with ``xi ~ N(0, 1)``. Every repetition draws from its own Philox stream,
and within a repetition the planted rows, covariates and label noise use
separate child streams. Growing ``alpha`` therefore only appends rows to
the same data, which keeps sweeps smooth across the grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .activations import ActivationSpec, get_activation
from .errors import CapabilityError, NumericalError, ValidationError
from .single_index import ChannelDensity, SingleIndexModel

MODELS = ("single-index", "committee", "hierarchical")
PREPROCESSINGS = ("conditional", "saturating", "identity", "square")
CLIP = 10.0
DENSE_LIMIT = 4000
DEFAULT_MEMORY_CAP = 2 * 1024**3


@dataclass(frozen=True)
class ExperimentConfig:
    """One planted experiment; ``repetitions`` independent datasets share it.

    ``snr`` applies to the single-index model, ``width`` and ``noise`` to the
    committee and hierarchical models, ``gamma`` to the hierarchical one.
    """

    activation: ActivationSpec
    model: str = "single-index"
    d: int = 1000
    alpha: float = 1.0
    seed: int = 0
    preprocessing: str = "conditional"
    repetitions: int = 5
    snr: float = 1.0
    width: int = 1
    noise: float = 1.0
    gamma: float = 1.0
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        if isinstance(self.activation, str):
            object.__setattr__(self, "activation", get_activation(self.activation))
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.preprocessing not in PREPROCESSINGS:
            raise ValidationError(f"preprocessing must be one of {PREPROCESSINGS}, got {self.preprocessing!r}")
        if int(self.d) != self.d or self.d < 100:
            raise ValidationError(f"dimension must be an integer >= 100, got {self.d!r}")
        if not self.alpha > 0 or not math.isfinite(self.alpha):
            raise ValidationError("alpha must be positive and finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.repetitions < 1:
            raise ValidationError("need at least one repetition")
        if self.model == "single-index" and self.width != 1:
            raise ValidationError("the single-index model has width 1")
        if self.n < self.width:
            raise ValidationError(f"n = {self.n} is smaller than the width {self.width}")
        if self.model == "hierarchical" and not self.gamma > 0.5:
            raise ValidationError("decay exponent gamma must exceed 1/2")
        if not self.noise > 0 or not self.snr >= 0:
            raise ValidationError("noise must be positive and snr non-negative")

    @property
    def n(self) -> int:
        return int(round(self.alpha * self.d))

    def repetition_seed(self, rep: int) -> int:
        """64-bit seed of repetition ``rep``, recorded in every output row."""
        ss = np.random.SeedSequence([int(self.seed), int(rep)])
        return int(ss.generate_state(1, np.uint64)[0])

    def unit_scales(self) -> np.ndarray:
        p = self.width
        if self.model == "single-index":
            return np.array([math.sqrt(self.snr)])
        if self.model == "committee":
            return np.full(p, 1.0 / math.sqrt(p))
        return np.arange(1, p + 1, dtype=float) ** (-self.gamma)

    def noise_std(self) -> float:
        return 1.0 if self.model == "single-index" else math.sqrt(self.noise)


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    w_star: np.ndarray
    seed: int
    config: ExperimentConfig


def generate_dataset(config: ExperimentConfig, rep: int = 0) -> Dataset:
    """Draw repetition ``rep`` of ``config``.

    Raises ``CapabilityError`` when the covariate matrix would exceed
    ``config.memory_cap`` bytes; ``streaming_spectral_estimate`` handles
    that case batch by batch.
    """
    need = 8 * config.n * config.d
    if need > config.memory_cap:
        raise CapabilityError(
            f"covariates need {need / 2**30:.2f} GiB, over the cap of {config.memory_cap / 2**30:.2f} GiB; "
            "use streaming_spectral_estimate"
        )
    seed, w_star, batches = _streams(config, rep, config.n)
    x, y = next(batches)
    return Dataset(x=x, y=y, w_star=w_star, seed=seed, config=config)


def _streams(config: ExperimentConfig, rep: int, rows: int):
    """Seed, planted rows, and a generator of (x, y) batches of ``rows`` rows.

    Normal draws fill sequentially, so batching does not change the data.
    """
    seed = config.repetition_seed(rep)
    s_w, s_x, s_xi = (np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(3))
    w_star = s_w.standard_normal((config.width, config.d)) / math.sqrt(config.d)
    scales, noise = config.unit_scales(), config.noise_std()

    def batches():
        left = config.n
        while left > 0:
            b = min(rows, left)
            x = s_x.standard_normal((b, config.d))
            y = config.activation(x @ w_star.T) @ scales + noise * s_xi.standard_normal(b)
            left -= b
            yield x, y

    return seed, w_star, batches()


# ---------------------------------------------------------------------------
# preprocessing


def conditional_variance_excess(config: ExperimentConfig) -> Callable[[np.ndarray], np.ndarray]:
    """``G(y) = E[z_1^2 - 1 | y]`` for the configured model, unclipped."""
    spec = config.activation
    if config.model == "single-index":
        return ChannelDensity(SingleIndexModel(spec, config.snr)).conditional
    if config.model == "committee":
        from .committee import CommitteeModel, committee_label_machinery

        return committee_label_machinery(CommitteeModel(spec, config.width, config.noise)).G1
    from .hierarchical import HierarchicalModel, hierarchical_label_machinery

    table = hierarchical_label_machinery(1, HierarchicalModel(spec, config.gamma, config.noise, config.width))
    return lambda y: np.interp(y, table.y, table.conditional, left=0.0, right=0.0)


def default_preprocessing(config: ExperimentConfig) -> Callable[[np.ndarray], np.ndarray]:
    """``T(y) = clip(E[z_1^2 - 1 | y], -10, 10)`` for the configured model."""
    g = conditional_variance_excess(config)
    return lambda y: np.clip(g(y), -CLIP, CLIP)


def make_preprocessing(config: ExperimentConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Resolve ``config.preprocessing``.

    ``saturating`` is ``G / (G + 1) = 1 - 1 / E[z^2 | y]``, bounded above by
    1. Its spectral threshold sits at the message-passing threshold, while
    the linear ``conditional`` default needs roughly three times as many
    samples for even single-index links.
    """
    if config.preprocessing == "conditional":
        return default_preprocessing(config)
    if config.preprocessing == "saturating":
        g = conditional_variance_excess(config)
        return lambda y: np.clip(g(y) / (g(y) + 1.0), -CLIP, CLIP)
    if config.preprocessing == "identity":
        return np.ones_like
    return lambda y: np.clip(y * y - 1.0, -CLIP, CLIP)


# ---------------------------------------------------------------------------
# spectral estimator


class SpectralEstimator(TransformerMixin, BaseEstimator):
    """Top eigenvectors of ``n^{-1} sum_i T(y_i) x_i x_i^T``.

    ``preprocessing`` must return bounded values; ``None`` means ``T = 1``.
    Below ``dense_limit`` dimensions the matrix is formed and the top block
    found with a dense symmetric solver; above it the matrix is applied as
    ``X^T (T * (X v)) / n`` inside a restarted Lanczos iteration.
    """

    def __init__(self, n_components: int = 1, preprocessing=None, dense_limit: int = DENSE_LIMIT, tol: float = 1e-10):
        self.n_components = n_components
        self.preprocessing = preprocessing
        self.dense_limit = dense_limit
        self.tol = tol

    def _weights(self, y):
        t = np.ones(len(y)) if self.preprocessing is None else np.asarray(self.preprocessing(np.asarray(y, float)), float)
        if not np.all(np.isfinite(t)):
            raise ValidationError("preprocessing returned non-finite values")
        return t

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        n, d = X.shape
        k = int(self.n_components)
        if not 1 <= k < d:
            raise ValidationError(f"n_components must lie in [1, {d - 1}]")
        t = self._weights(y)
        if d <= self.dense_limit:
            m = (X.T * t) @ X / n
            vals, vecs = scipy.linalg.eigh(m, subset_by_index=(d - k, d - 1))
        else:
            op = scipy.sparse.linalg.LinearOperator((d, d), matvec=lambda v: X.T @ (t * (X @ v)) / n, dtype=float)
            try:
                vals, vecs = scipy.sparse.linalg.eigsh(op, k=k, which="LA", tol=self.tol)
            except scipy.sparse.linalg.ArpackNoConvergence as exc:
                res = [float(np.linalg.norm(op @ v - lam * v)) for lam, v in zip(exc.eigenvalues, exc.eigenvectors.T)]
                raise NumericalError(f"eigensolver did not converge; residual norms {res}") from exc
        order = np.argsort(vals)[::-1]
        self.eigenvalues_ = vals[order]
        comps = vecs[:, order].T
        self.components_ = comps / np.linalg.norm(comps, axis=1, keepdims=True)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        return np.asarray(X, dtype=float) @ self.components_.T


def spectral_estimate(dataset: Dataset, preprocessing=None, p: int | None = None) -> np.ndarray:
    """Unit-norm estimated weight rows, one per component, strongest first."""
    width = dataset.w_star.shape[0]
    p = width if p is None else p
    if p > width:
        raise ValidationError(f"asked for {p} components from a width-{width} model")
    if preprocessing is None:
        preprocessing = make_preprocessing(dataset.config)
    est = SpectralEstimator(n_components=p, preprocessing=preprocessing).fit(dataset.x, dataset.y)
    return est.components_


def streaming_spectral_estimate(config: ExperimentConfig, rep: int = 0, preprocessing=None, p: int | None = None):
    """Spectral estimate without holding the covariates.

    Accumulates the ``d x d`` matrix over row batches sized to a quarter of
    the memory cap. Returns ``(estimate, w_star, seed)``.
    """
    d = config.d
    if 8 * d * d * 2 > config.memory_cap:
        raise CapabilityError(f"a {d} x {d} matrix does not fit the memory cap")
    p = config.width if p is None else p
    if preprocessing is None:
        preprocessing = make_preprocessing(config)
    rows = max(1, (config.memory_cap // 4 - 16 * d * d) // (8 * d))
    seed, w_star, batches = _streams(config, rep, rows)
    m = np.zeros((d, d))
    for x, y in batches:
        m += (x.T * preprocessing(y)) @ x
    vals, vecs = scipy.linalg.eigh(m / config.n, subset_by_index=(d - p, d - 1))
    comps = vecs[:, np.argsort(vals)[::-1]].T
    return comps, w_star, seed


def overlaps(estimate: np.ndarray, w_star: np.ndarray) -> np.ndarray:
    """Per planted row, the largest ``|cos|`` with any estimated row."""
    a = estimate / np.linalg.norm(estimate, axis=1, keepdims=True)
    b = w_star / np.linalg.norm(w_star, axis=1, keepdims=True)
    return np.minimum(np.abs(b @ a.T).max(axis=1), 1.0)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class OverlapReport:
    alpha: float
    seeds: list[int]
    overlaps: np.ndarray  # (repetitions, features)
    mean: np.ndarray = field(init=False)
    stderr: np.ndarray = field(init=False)

    def __post_init__(self):
        self.overlaps = np.atleast_2d(np.asarray(self.overlaps, dtype=float))
        if np.any(self.overlaps < 0) or np.any(self.overlaps > 1):
            raise ValidationError("overlaps must lie in [0, 1]")
        self.mean = self.overlaps.mean(axis=0)
        r = self.overlaps.shape[0]
        sd = self.overlaps.std(axis=0, ddof=1) if r > 1 else np.zeros(self.overlaps.shape[1])
        self.stderr = sd / math.sqrt(r)


@dataclass
class TransitionSweep:
    reports: list[OverlapReport]
    null_level: float
    transition: float | None
    feature_index: int = 0

    @property
    def alphas(self) -> np.ndarray:
        return np.array([r.alpha for r in self.reports])

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean[self.feature_index] for r in self.reports])

    @property
    def note(self) -> str:
        return "no transition inside the grid" if self.transition is None else ""

    def to_csv(self) -> str:
        lines = ["alpha,seed,overlap,feature_index"]
        for rep in self.reports:
            for seed, row in zip(rep.seeds, rep.overlaps):
                for k, v in enumerate(row):
                    lines.append(f"{rep.alpha:.16e},{seed},{v:.16e},{k}")
        return "\n".join(lines) + "\n"


def _one_run(args):
    config, rep, preprocessing = args
    data = generate_dataset(config, rep)
    est = spectral_estimate(data, preprocessing or make_preprocessing(config))
    return data.seed, overlaps(est, data.w_star)


def transition_sweep(
    template: ExperimentConfig,
    alpha_grid: Sequence[float],
    feature_index: int = 0,
    jobs: int = 1,
) -> TransitionSweep:
    """Mean overlap along ``alpha_grid`` and the first alpha beating 3x the null.

    The null level is the mean overlap at the smallest alpha. Repetitions
    reuse the same seeds at every alpha.
    """
    grid = [float(a) for a in alpha_grid]
    if len(grid) < 6:
        raise ValidationError("a transition sweep needs at least 6 alpha values")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("alpha grid must be strictly increasing")
    if not 0 <= feature_index < template.width:
        raise ValidationError("feature index outside the model width")
    pre = make_preprocessing(template) if jobs <= 1 else None
    tasks = [(replace(template, alpha=a), r, pre) for a in grid for r in range(template.repetitions)]
    if jobs > 1:
        # workers rebuild T, closures do not pickle
        tasks = [(c, r, None) for c, r, _ in tasks]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        results = [_one_run(t) for t in tasks]
    reps = template.repetitions
    reports = []
    for i, a in enumerate(grid):
        chunk = results[i * reps:(i + 1) * reps]
        reports.append(OverlapReport(a, [s for s, _ in chunk], np.array([o for _, o in chunk])))
    null = float(reports[0].mean[feature_index])
    transition = next((r.alpha for r in reports if r.mean[feature_index] > 3 * null), None)
    return TransitionSweep(reports, null, transition, feature_index)
