"""Closed-form Beta-Bernoulli posterior moments and Monte-Carlo predictive estimators.

These are the shared primitives every classifier in the package reduces to:
a symmetric-prior Beta-Bernoulli posterior for counting arguments, and the
sample mean / population standard deviation over posterior draws of a class
probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegeneratePriorError",
    "BetaBernoulliPosterior",
    "PredictiveEstimate",
    "PredictiveBatch",
    "beta_bernoulli_mean",
    "beta_bernoulli_variance",
    "mc_mean",
    "mc_uncertainty",
    "mc_estimate",
]

#: Probabilities live in [0, 1]; tiny fp excursions beyond are tolerated.
_BOUND_TOL = 1e-9


class DegeneratePriorError(ValueError):
    """Raised when both the prior strength and the data count are zero."""


@dataclass(frozen=True)
class BetaBernoulliPosterior:
    """Posterior after ``successes`` class-1 observations in ``trials`` draws
    under a symmetric Beta(c, c) prior."""

    trials: int
    successes: int
    prior_strength: float = 1.0

    def __post_init__(self):
        if self.trials < 0 or self.successes < 0:
            raise ValueError("counts must be nonnegative")
        if self.successes > self.trials:
            raise ValueError("successes cannot exceed trials")
        if self.prior_strength < 0 or not np.isfinite(self.prior_strength):
            raise ValueError("prior strength must be finite and nonnegative")


def beta_bernoulli_mean(post: BetaBernoulliPosterior) -> float:
    """Posterior mean (S + c) / (N + 2c)."""
    if post.prior_strength == 0.0 and post.trials == 0:
        raise DegeneratePriorError("mean undefined for c = 0 with no observations")
    return (post.successes + post.prior_strength) / (post.trials + 2.0 * post.prior_strength)


def beta_bernoulli_variance(post: BetaBernoulliPosterior) -> float:
    """Posterior variance E(1 - E) / (N + 2c + 1)."""
    m = beta_bernoulli_mean(post)
    return m * (1.0 - m) / (post.trials + 2.0 * post.prior_strength + 1.0)


def _as_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("sample set must contain at least one draw")
    if not np.isfinite(arr).all():
        raise ValueError("sample set contains non-finite values")
    if (arr < -_BOUND_TOL).any() or (arr > 1.0 + _BOUND_TOL).any():
        raise ValueError("sample values must lie in [0, 1]")
    return arr


def mc_mean(samples, axis: int = 0):
    """Arithmetic mean over posterior draws."""
    return _as_samples(samples).mean(axis=axis)


def mc_uncertainty(samples, axis: int = 0):
    """Population (1/T) standard deviation over posterior draws."""
    return _as_samples(samples).std(axis=axis, ddof=0)


@dataclass(frozen=True)
class PredictiveEstimate:
    """Per-point class-2 predictive mean and standard-deviation uncertainty."""

    mean: float
    uncertainty: float

    def __post_init__(self):
        if not (-_BOUND_TOL <= self.mean <= 1.0 + _BOUND_TOL):
            raise ValueError(f"mean {self.mean} outside [0, 1]")
        if not (-_BOUND_TOL <= self.uncertainty <= 0.5 + _BOUND_TOL):
            raise ValueError(f"uncertainty {self.uncertainty} outside [0, 0.5]")


@dataclass
class PredictiveBatch:
    """Vectorized predictive estimates for a batch of query points."""

    mean: np.ndarray
    uncertainty: np.ndarray
    tail_flags: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.uncertainty = np.asarray(self.uncertainty, dtype=float)
        if self.mean.shape != self.uncertainty.shape:
            raise ValueError("mean and uncertainty must have equal shapes")
        if (self.mean < -_BOUND_TOL).any() or (self.mean > 1.0 + _BOUND_TOL).any():
            raise ValueError("predictive means must lie in [0, 1]")
        if (self.uncertainty < -_BOUND_TOL).any() or (self.uncertainty > 0.5 + _BOUND_TOL).any():
            raise ValueError("predictive uncertainties must lie in [0, 0.5]")
        if self.tail_flags is not None:
            self.tail_flags = np.asarray(self.tail_flags, dtype=bool)
            if self.tail_flags.shape != self.mean.shape:
                raise ValueError("tail flags must match the batch shape")

    def __len__(self) -> int:
        return self.mean.shape[0]

    def __iter__(self):
        for m, u in zip(self.mean, self.uncertainty):
            yield PredictiveEstimate(float(m), float(u))


def mc_estimate(samples, tail_flags=None) -> PredictiveBatch:
    """Reduce a (draws, points) sample matrix to a predictive batch.

    Every classifier that represents its posterior as explicit draws routes
    its predictions through this single code path.
    """
    arr = _as_samples(samples)
    if arr.ndim == 1:
        arr = arr[:, None]
    return PredictiveBatch(
        mean=arr.mean(axis=0),
        uncertainty=arr.std(axis=0, ddof=0),
        tail_flags=tail_flags,
    )
