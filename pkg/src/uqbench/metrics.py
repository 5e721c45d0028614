"""Calibration and performance summaries for class-2 probability estimates.

All metrics compare predictions against the labels and, where applicable,
against the exact conditional class probability of the generator (the
LRFD), which plays the role other benchmarks must approximate by binning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EvaluationBatch",
    "accuracy",
    "z_score",
    "ece",
    "log_loss",
    "wasserstein1",
    "mean_kl",
    "DEFAULT_ECE_BINS",
    "PROB_CLIP",
]

#: Probabilities are clipped this far from 0 and 1 inside log terms.
PROB_CLIP = 1e-9

#: Equal-width confidence bins over [0.5, 1] used by default.
DEFAULT_ECE_BINS = 15


@dataclass
class EvaluationBatch:
    """Per-point predicted class-2 probability, true label and exact LRFD value."""

    prob2: np.ndarray
    labels: np.ndarray
    lrfd2: np.ndarray

    def __post_init__(self):
        self.prob2 = np.asarray(self.prob2, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.lrfd2 = np.asarray(self.lrfd2, dtype=float)
        n = self.prob2.shape[0]
        if self.labels.shape != (n,) or self.lrfd2.shape != (n,):
            raise ValueError("prob2, labels and lrfd2 must have equal lengths")
        if n == 0:
            raise ValueError("evaluation batch must be nonempty")
        if not np.isin(self.labels, (1, 2)).all():
            raise ValueError("labels must be 1 or 2")
        for name, arr in (("prob2", self.prob2), ("lrfd2", self.lrfd2)):
            if (arr < 0).any() or (arr > 1).any():
                raise ValueError(f"{name} values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.prob2.shape[0]

    @property
    def predicted_class(self) -> np.ndarray:
        """Thresholded class: 2 when prob2 > 0.5, ties go to class 1."""
        return np.where(self.prob2 > 0.5, 2, 1)

    @property
    def confidence(self) -> np.ndarray:
        return np.maximum(self.prob2, 1.0 - self.prob2)


def accuracy(batch: EvaluationBatch) -> float:
    """Fraction of points whose thresholded class equals the label."""
    return float((batch.predicted_class == batch.labels).mean())


def z_score(batch: EvaluationBatch) -> float:
    """Average confidence minus accuracy; 0 for aggregate calibration."""
    return float(batch.confidence.mean()) - accuracy(batch)


def ece(batch: EvaluationBatch, bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over equal-width confidence bins on [0.5, 1].

    Sum over bins of (n_b / N) |acc_b - conf_b|; empty bins contribute 0.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    conf = batch.confidence
    correct = batch.predicted_class == batch.labels
    edges = np.linspace(0.5, 1.0, bins + 1)
    # Right-closed bins, with confidence exactly 1.0 kept in the last bin.
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, bins - 1)
    n = len(batch)
    total = 0.0
    for b in range(bins):
        members = idx == b
        n_b = int(members.sum())
        if n_b == 0:
            continue
        acc_b = correct[members].mean()
        conf_b = conf[members].mean()
        total += (n_b / n) * abs(acc_b - conf_b)
    return float(total)


def log_loss(batch: EvaluationBatch) -> float:
    """Mean negative log probability assigned to the true class."""
    p_true = np.where(batch.labels == 2, batch.prob2, 1.0 - batch.prob2)
    return float(-np.log(np.clip(p_true, PROB_CLIP, None)).mean())


def wasserstein1(batch: EvaluationBatch) -> float:
    """1-D Wasserstein-1 distance between the empirical distributions of the
    predicted probabilities and the LRFD values (mean absolute difference of
    order statistics for equal-length samples)."""
    p = np.sort(batch.prob2)
    q = np.sort(batch.lrfd2)
    if p.shape != q.shape:
        raise ValueError("prediction and LRFD lists must have equal length")
    return float(np.abs(p - q).mean())


def mean_kl(batch: EvaluationBatch) -> float:
    """Mean KL divergence from the exact Bernoulli(LRFD) to the estimate.

    KL(Bernoulli(nu) || Bernoulli(p)) per point, with the 0 log 0 = 0
    convention for nu in {0, 1} and the estimate clipped away from 0 and 1.
    """
    nu = batch.lrfd2
    p = np.clip(batch.prob2, PROB_CLIP, 1.0 - PROB_CLIP)
    with np.errstate(divide="ignore", invalid="ignore"):
        term1 = np.where(nu > 0, nu * np.log(nu / p), 0.0)
        term2 = np.where(nu < 1, (1.0 - nu) * np.log((1.0 - nu) / (1.0 - p)), 0.0)
    return float((term1 + term2).mean())
