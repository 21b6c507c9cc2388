"""Joint Gaussian model of image patches and conditional samplers.

A single location-independent Gaussian is fitted over flattened
(window + padding) patches drawn from a corpus. Conditioning the inner
window on observed border pixels uses the standard Gaussian identity

    mean_a|b = mu_a + S_ab S_bb^-1 (x_b - mu_b)
    cov_a|b  = S_aa - S_ab S_bb^-1 S_ba

with S_bb handled through its Cholesky factor, never inverted explicitly.
A discrete finite-support sampler is provided as well; its exhaustive
enumeration mode makes exact-expectation oracles possible in tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .image import Image, Rect, extract_patch

__all__ = [
    "PatchStatsError",
    "SingularCovariance",
    "PatchGaussian",
    "ConditionalGaussian",
    "fit_patch_gaussian",
    "condition_on_border",
    "sample_inner",
    "GaussianConditionalSampler",
    "DiscreteSampler",
    "make_discrete_sampler",
    "save_patch_gaussian",
    "load_patch_gaussian",
]


class PatchStatsError(ValueError):
    pass


class SingularCovariance(PatchStatsError):
    pass


@dataclass(frozen=True)
class PatchGaussian:
    """Mean and ridge-regularized covariance over flattened patches."""

    patch_edge: int
    channels: int
    mean: np.ndarray
    covariance: np.ndarray
    epsilon: float
    sample_count: int

    def __post_init__(self):
        m = self.patch_edge * self.patch_edge * self.channels
        if self.mean.shape != (m,) or self.covariance.shape != (m, m):
            raise PatchStatsError(
                f"model dimensions inconsistent: edge {self.patch_edge}, "
                f"channels {self.channels} imply M={m}"
            )
        if np.abs(self.covariance - self.covariance.T).max() > 1e-12:
            raise PatchStatsError("covariance must be symmetric within 1e-12")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ConditionalGaussian:
    """Conditional law of the inner window given observed border pixels.

    `factor` is lower-triangular with factor @ factor.T equal to the
    conditional covariance.
    """

    inner_indices: np.ndarray
    mean: np.ndarray
    factor: np.ndarray


def fit_patch_gaussian(
    corpus: Sequence[Image],
    patch_edge: int,
    max_patches: int = 2000,
    epsilon: float = 1e-4,
    seed: int = 0,
) -> PatchGaussian:
    """Fit sample moments of flattened patches drawn across the corpus.

    Draws are spread near-evenly over the corpus images (earlier images get
    the remainder) with seeded uniform positions inside each image. The
    covariance uses the n-1 divisor and gains epsilon on its diagonal so
    the Cholesky factorization succeeds even on near-constant corpora.
    """
    corpus = list(corpus)
    if not corpus:
        raise PatchStatsError("corpus is empty")
    if max_patches < 2:
        raise PatchStatsError("need at least 2 patches for a covariance")
    channels = corpus[0].channels
    for img in corpus:
        if img.channels != channels:
            raise PatchStatsError("corpus images must share a channel count")
        if img.width < patch_edge or img.height < patch_edge:
            raise PatchStatsError(
                f"corpus image {img.width}x{img.height} is smaller than "
                f"patch edge {patch_edge}"
            )
    rng = np.random.default_rng(seed)
    per_image = np.full(len(corpus), max_patches // len(corpus), dtype=int)
    per_image[: max_patches % len(corpus)] += 1
    rows = []
    for img, count in zip(corpus, per_image):
        for _ in range(count):
            x = int(rng.integers(0, img.width - patch_edge + 1))
            y = int(rng.integers(0, img.height - patch_edge + 1))
            rows.append(extract_patch(img, Rect(x, y, patch_edge, patch_edge)).values)
    data = np.stack(rows)
    n = data.shape[0]
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    cov[np.diag_indices_from(cov)] += epsilon
    return PatchGaussian(
        patch_edge=patch_edge,
        channels=channels,
        mean=mean,
        covariance=cov,
        epsilon=epsilon,
        sample_count=n,
    )


def _chol_psd(matrix: np.ndarray) -> np.ndarray:
    """Cholesky with escalating diagonal jitter to absorb roundoff."""
    if matrix.size == 0:
        return matrix.copy()
    sym = (matrix + matrix.T) / 2.0
    scale = max(float(np.abs(np.diag(sym)).max()), 1.0)
    for jitter in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        try:
            return np.linalg.cholesky(sym + jitter * scale * np.eye(sym.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise SingularCovariance("conditional covariance is not positive semidefinite")


class _ConditionOperator:
    """Index-set-dependent pieces of the conditioning identity, reusable
    across many border-value vectors (the dominant cost saving: one
    factorization serves every sample of an ROI, and every ROI with the
    same in-bounds geometry)."""

    def __init__(self, pg: PatchGaussian, inner: np.ndarray, border: np.ndarray):
        self.inner = inner
        mu = pg.mean
        cov = pg.covariance
        self.mu_a = mu[inner]
        self.mu_b = mu[border]
        s_aa = cov[np.ix_(inner, inner)]
        if border.size == 0:
            self.gain = np.zeros((inner.size, 0))
            self.border_chol = np.zeros((0, 0))
            self.factor = _chol_psd(s_aa)
            return
        s_ab = cov[np.ix_(inner, border)]
        s_bb = cov[np.ix_(border, border)]
        try:
            chol_bb = np.linalg.cholesky(s_bb)
        except np.linalg.LinAlgError:
            smallest = float(np.linalg.eigvalsh(s_bb).min())
            raise SingularCovariance(
                f"border covariance is numerically singular despite ridge "
                f"(smallest pivot {smallest:.3e})"
            ) from None
        self.border_chol = chol_bb
        # white = L^-1 S_ba, so S_ab S_bb^-1 S_ba = white.T white.
        white = solve_triangular(chol_bb, s_ab.T, lower=True)
        self.gain = white  # (b, a); mean update is gain.T @ whitened innovation
        self.factor = _chol_psd(s_aa - white.T @ white)

    def conditional(self, border_values: np.ndarray) -> ConditionalGaussian:
        if self.gain.shape[1] == 0 or self.border_chol.size == 0:
            mean = self.mu_a.copy()
        else:
            innovation = solve_triangular(
                self.border_chol, np.asarray(border_values, dtype=np.float64) - self.mu_b,
                lower=True,
            )
            mean = self.mu_a + self.gain.T @ innovation
        if not np.all(np.isfinite(mean)):
            raise PatchStatsError("conditional mean is not finite")
        return ConditionalGaussian(inner_indices=self.inner, mean=mean, factor=self.factor)


def condition_on_border(
    pg: PatchGaussian,
    inner_indices: Sequence[int],
    border_values: Sequence[float],
    border_indices: Sequence[int] | None = None,
) -> ConditionalGaussian:
    """Condition the inner index set on observed border values.

    With the default border (every index outside the inner set) this is the
    full conditioning of the fitted patch model. Passing an explicit subset
    conditions on only those positions and marginalizes out the rest, which
    is how clipped padding rings at image edges are handled.
    """
    inner = np.asarray(inner_indices, dtype=np.intp)
    if inner.size == 0:
        raise PatchStatsError("inner index set is empty")
    if inner.min() < 0 or inner.max() >= pg.dim or len(np.unique(inner)) != inner.size:
        raise PatchStatsError("inner indices must be unique and inside [0, M)")
    if border_indices is None:
        border = np.setdiff1d(np.arange(pg.dim), inner)
    else:
        border = np.asarray(border_indices, dtype=np.intp)
        if border.size and (border.min() < 0 or border.max() >= pg.dim):
            raise PatchStatsError("border indices must lie inside [0, M)")
        if np.intersect1d(border, inner).size:
            raise PatchStatsError("border and inner index sets overlap")
    values = np.asarray(border_values, dtype=np.float64)
    if values.shape != (border.size,):
        raise PatchStatsError(
            f"border values length {values.shape} does not match border set "
            f"size {border.size}"
        )
    return _ConditionOperator(pg, inner, border).conditional(values)


def sample_inner(cond: ConditionalGaussian, rng: np.random.Generator) -> np.ndarray:
    """One seeded draw from the conditional, clamped into [0, 1]."""
    z = rng.standard_normal(cond.mean.shape[0])
    return np.clip(cond.mean + cond.factor @ z, 0.0, 1.0)


class GaussianConditionalSampler:
    """Draws window replacements from the fitted patch model, conditioned on
    the surrounding padding ring. Operators are cached per index-set pair,
    so repeated geometry (every interior window position) costs one
    factorization total."""

    kind = "gaussian_conditional"
    exhaustive = False

    def __init__(self, model: PatchGaussian):
        self.model = model
        self._operators: dict[tuple[bytes, bytes], _ConditionOperator] = {}

    def _operator(self, inner: np.ndarray, border: np.ndarray) -> _ConditionOperator:
        key = (inner.tobytes(), border.tobytes())
        op = self._operators.get(key)
        if op is None:
            op = _ConditionOperator(self.model, inner, border)
            self._operators[key] = op
        return op

    def conditional_for(
        self, inner: np.ndarray, border: np.ndarray, border_values: np.ndarray
    ) -> ConditionalGaussian:
        return self._operator(inner, border).conditional(border_values)

    def draw(
        self,
        inner: np.ndarray,
        border: np.ndarray,
        border_values: np.ndarray,
        count: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """(count, m) clamped draws for one window position."""
        cond = self.conditional_for(inner, border, border_values)
        z = rng.standard_normal((count, cond.mean.shape[0]))
        return np.clip(cond.mean + z @ cond.factor.T, 0.0, 1.0)


class DiscreteSampler:
    """Finite-support sampler filling each window pixel independently.

    With `exhaustive` set, the engine enumerates all |support|^m joint
    assignments with product weights instead of sampling, which yields the
    exact marginal expectation.
    """

    kind = "discrete"

    def __init__(self, support, weights=None, exhaustive: bool = False):
        self.support = np.asarray(support, dtype=np.float64)
        if self.support.size == 0:
            raise PatchStatsError("discrete support must be nonempty")
        if weights is None:
            weights = np.full(self.support.size, 1.0 / self.support.size)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != self.support.shape:
            raise PatchStatsError("support and weights lengths differ")
        if np.any(self.weights <= 0.0):
            raise PatchStatsError("discrete weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise PatchStatsError(
                f"discrete weights sum to {self.weights.sum()}, not 1 within 1e-12"
            )
        self.exhaustive = bool(exhaustive)

    def draw(self, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.support.size, size=(count, m), p=self.weights)
        return self.support[idx]

    def enumerate(self, m: int, limit: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
        """All |support|^m assignments with their product weights."""
        total = self.support.size**m
        if total > limit:
            raise PatchStatsError(
                f"exhaustive enumeration would need {total} assignments (limit {limit})"
            )
        assignments = np.array(
            list(itertools.product(range(self.support.size), repeat=m)), dtype=np.intp
        )
        values = self.support[assignments]
        weights = np.prod(self.weights[assignments], axis=1)
        return values, weights


def make_discrete_sampler(support, weights=None, exhaustive: bool = False) -> DiscreteSampler:
    return DiscreteSampler(support, weights, exhaustive)


# ---------------------------------------------------------------------------
# PGS1 persistence: header `PGS1 patch_edge channels M sample_count epsilon`,
# then M mean values, then M*M covariance values.
# ---------------------------------------------------------------------------


def save_patch_gaussian(pg: PatchGaussian, path: str | Path) -> None:
    parts = [
        f"PGS1 {pg.patch_edge} {pg.channels} {pg.dim} {pg.sample_count} {pg.epsilon:.17g}"
    ]
    parts.append(" ".join(f"{v:.17g}" for v in pg.mean))
    for row in pg.covariance:
        parts.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(parts) + "\n")


def load_patch_gaussian(path: str | Path) -> PatchGaussian:
    tokens = Path(path).read_text().split()
    if len(tokens) < 6 or tokens[0] != "PGS1":
        raise PatchStatsError(f"{path}: not a PGS1 stats file")
    patch_edge, channels, m, sample_count = (int(t) for t in tokens[1:5])
    epsilon = float(tokens[5])
    values = np.array([float(t) for t in tokens[6:]])
    if values.size != m + m * m:
        raise PatchStatsError(
            f"{path}: expected {m + m * m} values for M={m}, got {values.size}"
        )
    return PatchGaussian(
        patch_edge=patch_edge,
        channels=channels,
        mean=values[:m].copy(),
        covariance=values[m:].reshape(m, m).copy(),
        epsilon=epsilon,
        sample_count=sample_count,
    )
