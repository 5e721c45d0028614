"""Truncated Dirichlet-process mixture of product kernels, fitted by Gibbs sampling.

Each mixture component factorizes over the two continuous features
(independent Gaussians with Normal-Inverse-Gamma priors) and the class
variate (Bernoulli with a flat Beta(1, 1) prior). Stick-breaking weights are
truncated at a fixed component count. The full conditional class
probability of a query point is computed per retained Gibbs draw in log
space, and draws are aggregated into predictive mean / uncertainty exactly
like the other posterior-sample classifiers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .posterior import PredictiveBatch, mc_estimate
from .synthdata import Dataset

log = logging.getLogger(__name__)

__all__ = [
    "DPMMPrior",
    "GibbsDraw",
    "PosteriorDrawSet",
    "gibbs_fit",
    "dpmm_conditional",
    "log_feature_density",
    "dpmm_predict",
    "DPMMClassifier",
]

_THETA_CLIP = 1e-12


@dataclass(frozen=True)
class DPMMPrior:
    """Hyperparameters: truncation, DP concentration, per-feature NIG values.

    The class kernel prior is fixed at Beta(1, 1). ``rate`` and ``loc`` are
    per-feature arrays; ``kappa`` is the prior pseudo-count on the mean and
    ``shape``/``rate`` parameterize the Inverse-Gamma on the variance.
    """

    truncation: int = 64
    concentration: float = 1.0
    loc: tuple[float, float] = (0.0, 0.0)
    kappa: float = 0.01
    shape: float = 2.0
    rate: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")
        if self.concentration <= 0 or self.kappa <= 0 or self.shape <= 0:
            raise ValueError("concentration, kappa and shape must be positive")
        if any(r <= 0 for r in self.rate):
            raise ValueError("rate parameters must be positive")

    @classmethod
    def from_data(cls, x: np.ndarray, truncation: int = 64, concentration: float = 1.0,
                  kappa: float = 0.01, shape: float = 2.0) -> "DPMMPrior":
        """Empirical hyperparameters: prior mean at the feature means, prior
        variance expectation equal to the feature variances."""
        x = np.asarray(x, dtype=float)
        loc = x.mean(axis=0)
        rate = x.var(axis=0) * (shape - 1.0)
        return cls(truncation=truncation, concentration=concentration,
                   loc=tuple(loc), kappa=kappa, shape=shape, rate=tuple(rate))

    def to_dict(self) -> dict:
        return {
            "truncation": self.truncation,
            "concentration": self.concentration,
            "loc": list(self.loc),
            "kappa": self.kappa,
            "shape": self.shape,
            "rate": list(self.rate),
            "class_prior": [1.0, 1.0],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DPMMPrior":
        return cls(truncation=int(d["truncation"]), concentration=float(d["concentration"]),
                   loc=tuple(d["loc"]), kappa=float(d["kappa"]), shape=float(d["shape"]),
                   rate=tuple(d["rate"]))


@dataclass
class GibbsDraw:
    """One retained posterior draw of all mixture parameters."""

    weights: np.ndarray    # (M,), simplex
    means: np.ndarray      # (M, 2)
    variances: np.ndarray  # (M, 2), positive
    theta: np.ndarray      # (M,), per-component class-2 probability in (0, 1)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GibbsDraw":
        return cls(np.asarray(d["weights"]), np.asarray(d["means"]),
                   np.asarray(d["variances"]), np.asarray(d["theta"]))


@dataclass
class PosteriorDrawSet:
    draws: list[GibbsDraw]
    chain_ids: np.ndarray
    prior: DPMMPrior
    chains: int
    burn_in: int
    samples_per_chain: int
    seed: int
    thin: int = 1

    @property
    def n_draws(self) -> int:
        return len(self.draws)

    def to_dict(self) -> dict:
        return {
            "prior": self.prior.to_dict(),
            "chains": self.chains,
            "burn_in": self.burn_in,
            "samples_per_chain": self.samples_per_chain,
            "seed": self.seed,
            "thin": self.thin,
            "chain_ids": self.chain_ids.tolist(),
            "draws": [d.to_dict() for d in self.draws],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorDrawSet":
        return cls(
            draws=[GibbsDraw.from_dict(x) for x in d["draws"]],
            chain_ids=np.asarray(d["chain_ids"], dtype=int),
            prior=DPMMPrior.from_dict(d["prior"]),
            chains=int(d["chains"]),
            burn_in=int(d["burn_in"]),
            samples_per_chain=int(d["samples_per_chain"]),
            seed=int(d["seed"]),
            thin=int(d.get("thin", 1)),
        )


def _stick_weights(v: np.ndarray) -> np.ndarray:
    """Weights from stick fractions v (length M, last entry 1)."""
    log1mv = np.log1p(-np.clip(v[:-1], 0.0, 1.0 - 1e-15))
    w = np.empty_like(v)
    w[0] = v[0]
    if len(v) > 1:
        w[1:] = v[1:] * np.exp(np.cumsum(log1mv))
    return w


def _log_normal_pdf(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Summed per-feature Gaussian log densities, shape (n, M).

    May legitimately produce -inf for extreme points; the callers treat that
    as the tail-fallback regime.
    """
    diff = x[:, None, :] - means[None, :, :]
    with np.errstate(over="ignore", divide="ignore"):
        return (-0.5 * (diff * diff) / variances[None, :, :]
                - 0.5 * np.log(2.0 * np.pi * variances)[None, :, :]).sum(axis=2)


def _run_chain(x: np.ndarray, class2: np.ndarray, prior: DPMMPrior, burn_in: int,
               samples: int, thin: int, rng: np.random.Generator) -> list[GibbsDraw]:
    n, n_feat = x.shape
    M = prior.truncation
    loc = np.asarray(prior.loc)
    rate = np.asarray(prior.rate)

    # Initialize all component parameters from the prior.
    variances = rate / rng.gamma(prior.shape, size=(M, n_feat))
    means = rng.normal(loc, np.sqrt(variances / prior.kappa))
    theta = np.clip(rng.beta(1.0, 1.0, size=M), _THETA_CLIP, 1.0 - _THETA_CLIP)
    if M > 1:
        v = rng.beta(1.0, prior.concentration, size=M)
        v[-1] = 1.0
        weights = _stick_weights(v)
    else:
        weights = np.ones(1)

    draws: list[GibbsDraw] = []
    total = burn_in + samples * thin
    log_theta_like = np.empty((n, M))
    for sweep in range(total):
        # 1. Component assignments via Gumbel-max on log responsibilities.
        with np.errstate(divide="ignore"):
            logw = np.log(weights)
            # broadcasts (n, 1) condition against (M,) values -> (n, M)
            log_theta_like[:] = np.where(class2[:, None], np.log(theta)[None, :],
                                         np.log1p(-theta)[None, :])
        logr = logw[None, :] + _log_normal_pdf(x, means, variances) + log_theta_like
        z = np.argmax(logr + rng.gumbel(size=(n, M)), axis=1)

        counts = np.bincount(z, minlength=M).astype(float)

        # 2. Stick fractions given assignment counts.
        if M > 1:
            tail = counts[::-1].cumsum()[::-1]
            v = rng.beta(1.0 + counts[:-1], prior.concentration + tail[1:])
            v = np.append(v, 1.0)
            weights = _stick_weights(v)
        else:
            weights = np.ones(1)

        # 3. Conjugate Normal-Inverse-Gamma updates per component and feature;
        #    empty components fall back to the prior automatically.
        sums = np.stack([np.bincount(z, weights=x[:, j], minlength=M) for j in range(n_feat)], axis=1)
        sumsq = np.stack([np.bincount(z, weights=x[:, j] ** 2, minlength=M) for j in range(n_feat)], axis=1)
        cnt = counts[:, None]
        xbar = np.divide(sums, cnt, out=np.zeros_like(sums), where=cnt > 0)
        kappa_n = prior.kappa + cnt
        mu_n = (prior.kappa * loc[None, :] + sums) / kappa_n
        a_n = prior.shape + 0.5 * cnt
        scatter = np.maximum(sumsq - cnt * xbar**2, 0.0)
        b_n = rate[None, :] + 0.5 * scatter + prior.kappa * cnt * (xbar - loc[None, :]) ** 2 / (2.0 * kappa_n)
        variances = b_n / rng.gamma(a_n, size=b_n.shape)
        means = rng.normal(mu_n, np.sqrt(variances / kappa_n))

        # 4. Class-kernel Bernoulli parameters under the flat Beta(1, 1) prior.
        s2 = np.bincount(z[class2], minlength=M).astype(float)
        theta = np.clip(rng.beta(1.0 + s2, 1.0 + counts - s2), _THETA_CLIP, 1.0 - _THETA_CLIP)

        if sweep >= burn_in and (sweep - burn_in) % thin == 0:
            draws.append(GibbsDraw(weights.copy(), means.copy(), variances.copy(), theta.copy()))
    return draws


def gibbs_fit(train: Dataset, prior: DPMMPrior | None = None, chains: int = 4,
              burn_in: int = 900, samples: int = 300, seed: int = 0,
              thin: int = 1) -> PosteriorDrawSet:
    """Run independent Gibbs chains and pool the retained draws."""
    if len(train) == 0:
        raise ValueError("training set must be nonempty")
    if prior is None:
        prior = DPMMPrior.from_data(train.x)
    x = train.x
    class2 = train.y == 2
    chain_seeds = np.random.SeedSequence(seed).generate_state(chains, dtype=np.uint64)
    draws: list[GibbsDraw] = []
    chain_ids: list[int] = []
    for c, cs in enumerate(chain_seeds):
        rng = np.random.default_rng(int(cs))
        chain_draws = _run_chain(x, class2, prior, burn_in, samples, thin, rng)
        draws.extend(chain_draws)
        chain_ids.extend([c] * len(chain_draws))
    return PosteriorDrawSet(draws=draws, chain_ids=np.asarray(chain_ids), prior=prior,
                            chains=chains, burn_in=burn_in, samples_per_chain=samples,
                            seed=seed, thin=thin)


def log_feature_density(draw: GibbsDraw, x: np.ndarray) -> np.ndarray:
    """Log of the mixture feature density sum_k w_k g_k(x) per point."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        lw = np.log(draw.weights)[None, :] + _log_normal_pdf(x, draw.means, draw.variances)
    return logsumexp(lw, axis=1)


def dpmm_conditional(draw: GibbsDraw, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional class-2 probability under one draw, evaluated in log space.

    Returns (probabilities, tail_flags). The flag marks points where even the
    log-space mixture density was not finite; those fall back to the
    weight-averaged class parameter (the prior-predictive limit).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        lw = np.log(draw.weights)[None, :] + _log_normal_pdf(x, draw.means, draw.variances)
        log_num = logsumexp(lw + np.log(draw.theta)[None, :], axis=1)
    log_den = logsumexp(lw, axis=1)
    with np.errstate(invalid="ignore"):
        q = np.exp(log_num - log_den)
    flags = ~np.isfinite(log_den)
    if flags.any():
        q[flags] = float(draw.weights @ draw.theta)
    return np.clip(q, 0.0, 1.0), flags


def dpmm_predict(draw_set: PosteriorDrawSet, x: np.ndarray) -> PredictiveBatch:
    """Aggregate per-draw conditionals into predictive mean / uncertainty."""
    if draw_set.n_draws < 1:
        raise ValueError("draw set must contain at least one draw")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    samples = np.empty((draw_set.n_draws, len(x)))
    any_flag = np.zeros(len(x), dtype=bool)
    for t, draw in enumerate(draw_set.draws):
        q, flags = dpmm_conditional(draw, x)
        samples[t] = q
        any_flag |= flags
    return mc_estimate(samples, tail_flags=any_flag)


class DPMMClassifier:
    """Mixture-model classifier matching the shared fit/predict contract."""

    algorithm = "dpmm"

    def __init__(self, truncation: int = 64, concentration: float = 1.0, chains: int = 4,
                 burn_in: int = 900, samples: int = 300, thin: int = 1,
                 prior: DPMMPrior | None = None):
        self.truncation = truncation
        self.concentration = concentration
        self.chains = chains
        self.burn_in = burn_in
        self.samples = samples
        self.thin = thin
        self.prior = prior
        self.draw_set: PosteriorDrawSet | None = None

    def fit(self, train: Dataset, validation: Dataset | None = None, seed: int = 0):
        prior = self.prior or DPMMPrior.from_data(
            train.x, truncation=self.truncation, concentration=self.concentration)
        self.draw_set = gibbs_fit(train, prior, chains=self.chains, burn_in=self.burn_in,
                                  samples=self.samples, seed=seed, thin=self.thin)
        return self

    def predict(self, x: np.ndarray) -> PredictiveBatch:
        if self.draw_set is None:
            raise RuntimeError("classifier is not fitted")
        return dpmm_predict(self.draw_set, x)

    def hyperparameters(self) -> dict:
        return {
            "truncation": self.truncation,
            "concentration": self.concentration,
            "chains": self.chains,
            "burn_in": self.burn_in,
            "samples": self.samples,
            "thin": self.thin,
        }

    def to_dict(self) -> dict:
        if self.draw_set is None:
            raise RuntimeError("classifier is not fitted")
        return self.draw_set.to_dict()

    def restore(self, model: dict) -> "DPMMClassifier":
        self.draw_set = PosteriorDrawSet.from_dict(model)
        return self
