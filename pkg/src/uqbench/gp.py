"""Binary Gaussian-process classification with an RBF kernel.

The latent posterior is approximated by the Laplace method (Newton mode
finding with the logistic likelihood), kernel hyperparameters are tuned by
maximizing the approximate log marginal likelihood with multi-start
Nelder-Mead in log space, and predictive class probabilities come from
Monte-Carlo sampling of the per-point latent marginals through the sigmoid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .posterior import PredictiveBatch, mc_estimate
from .synthdata import Dataset

log = logging.getLogger(__name__)

__all__ = [
    "RBFKernel",
    "LatentPosterior",
    "FittedGP",
    "rbf",
    "kernel_matrix",
    "laplace_fit",
    "gp_latent_predict",
    "gp_predict",
    "GPClassifier",
]

_JITTER_START = 1e-8
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class RBFKernel:
    """Isotropic squared-exponential kernel with output variance sigma_o^2."""

    length_scale: float = 8.0
    output_variance: float = 2.0

    def __post_init__(self):
        if self.length_scale <= 0 or self.output_variance <= 0:
            raise ValueError("kernel parameters must be positive")

    @property
    def output_std(self) -> float:
        return float(np.sqrt(self.output_variance))


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    d2 = aa + bb - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def rbf(x, x2, length_scale: float, output_variance: float):
    """Kernel value sigma_o^2 exp(-||x - x'||^2 / (2 l^2))."""
    if length_scale <= 0 or output_variance <= 0:
        raise ValueError("kernel parameters must be positive")
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    d2 = ((x - x2) ** 2).sum(axis=-1)
    return output_variance * np.exp(-0.5 * d2 / length_scale**2)


def kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: RBFKernel, d2: np.ndarray | None = None) -> np.ndarray:
    if d2 is None:
        d2 = _sqdist(a, b)
    return kernel.output_variance * np.exp(-0.5 * d2 / kernel.length_scale**2)


@dataclass
class LatentPosterior:
    """Per-query-point latent mean and standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if (self.std <= 0).any():
            raise ValueError("latent standard deviations must be positive")


@dataclass
class FittedGP:
    x: np.ndarray          # training inputs (n, 2)
    y: np.ndarray          # labels in {-1, +1}, +1 = class 2
    kernel: RBFKernel
    f_hat: np.ndarray      # latent mode
    grad: np.ndarray       # d log p(y|f) / df at the mode
    sqrt_w: np.ndarray     # sqrt of the likelihood curvature at the mode
    chol_b: np.ndarray     # lower Cholesky factor of B = I + W^1/2 K W^1/2
    jitter: float
    log_marginal: float
    newton_iters: int


def _newton_mode(K: np.ndarray, y: np.ndarray, tol: float = 1e-6, max_iter: int = 100):
    """Find the latent mode for the logistic likelihood.

    Returns (f_hat, grad, sqrt_w, chol_b, log_marginal, iterations). The
    linear algebra follows the standard numerically stable formulation built
    on the Cholesky factor of B = I + W^1/2 K W^1/2.
    """
    n = len(y)
    f = np.zeros(n)
    yp = (y + 1.0) / 2.0
    a = np.zeros(n)
    for it in range(1, max_iter + 1):
        pi = expit(f)
        w = pi * (1.0 - pi)
        sqrt_w = np.sqrt(w)
        B = np.eye(n) + sqrt_w[:, None] * K * sqrt_w[None, :]
        L = cholesky(B, lower=True, check_finite=False)
        grad = yp - pi
        b = w * f + grad
        rhs = sqrt_w * (K @ b)
        a = b - sqrt_w * cho_solve((L, True), rhs, check_finite=False)
        f_new = K @ a
        delta = np.abs(f_new - f).mean()
        f = f_new
        if delta < tol:
            break
    pi = expit(f)
    w = pi * (1.0 - pi)
    sqrt_w = np.sqrt(w)
    B = np.eye(n) + sqrt_w[:, None] * K * sqrt_w[None, :]
    L = cholesky(B, lower=True, check_finite=False)
    grad = yp - pi
    lml = -0.5 * float(a @ f) + float(log_expit(y * f).sum()) - float(np.log(np.diag(L)).sum())
    return f, grad, sqrt_w, L, lml, it


def _newton_with_jitter(x: np.ndarray, y: np.ndarray, kernel: RBFKernel,
                        tol: float, max_iter: int, d2: np.ndarray | None = None):
    K = kernel_matrix(x, x, kernel, d2=d2)
    jitter = 0.0
    while True:
        try:
            Kj = K if jitter == 0.0 else K + jitter * np.eye(len(y))
            return (*_newton_mode(Kj, y, tol, max_iter), jitter)
        except np.linalg.LinAlgError:
            jitter = _JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX:
                raise
            log.warning("Cholesky failed, retrying with jitter %g", jitter)


def laplace_fit(train: Dataset | tuple, kernel: RBFKernel = RBFKernel(),
                optimize: bool = False, newton_tol: float = 1e-6,
                newton_max_iter: int = 100, restarts: int = 3) -> FittedGP:
    """Fit the Laplace approximation, optionally tuning kernel parameters.

    When ``optimize`` is set, (length scale, output variance) maximize the
    approximate log marginal likelihood via Nelder-Mead in log-parameter
    space from ``restarts`` deterministic start points around the supplied
    kernel values.
    """
    if isinstance(train, Dataset):
        x = train.x
        y = np.where(train.y == 2, 1.0, -1.0)
    else:
        x, y = train
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not np.isin(y, (-1.0, 1.0)).all():
            raise ValueError("labels must be mapped to -1/+1")

    d2 = _sqdist(x, x)
    if optimize:
        kernel = _optimize_kernel(x, y, kernel, d2, newton_tol, newton_max_iter, restarts)
    f, grad, sqrt_w, L, lml, iters, jitter = _newton_with_jitter(
        x, y, kernel, newton_tol, newton_max_iter, d2=d2)
    return FittedGP(x=x, y=y, kernel=kernel, f_hat=f, grad=grad, sqrt_w=sqrt_w,
                    chol_b=L, jitter=jitter, log_marginal=lml, newton_iters=iters)


#: Deterministic log-space offsets for the multi-start optimizer.
_RESTART_OFFSETS = ((0.0, 0.0), (0.7, -0.7), (-0.7, 0.7))


def _optimize_kernel(x, y, kernel: RBFKernel, d2, tol, max_iter, restarts) -> RBFKernel:
    # Mode finding inside the objective is capped: the optimizer only needs
    # the marginal-likelihood landscape, not fully polished modes.
    def neg_lml(theta):
        l, s2 = np.exp(theta)
        if not (1e-3 < l < 1e4 and 1e-6 < s2 < 1e4):
            return 1e12
        try:
            *_, lml, _, _ = _newton_with_jitter(x, y, RBFKernel(l, s2), tol, min(max_iter, 40), d2=d2)
        except np.linalg.LinAlgError:
            return 1e12
        return -lml

    x0 = np.log([kernel.length_scale, kernel.output_variance])
    best_theta, best_val = None, np.inf
    for k in range(restarts):
        off = _RESTART_OFFSETS[k % len(_RESTART_OFFSETS)]
        res = minimize(neg_lml, x0 + np.asarray(off), method="Nelder-Mead",
                       options={"maxiter": 60, "xatol": 1e-2, "fatol": 1e-3})
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    l, s2 = np.exp(best_theta)
    return RBFKernel(float(l), float(s2))


def gp_latent_predict(fit: FittedGP, x_star: np.ndarray, chunk: int = 2048) -> LatentPosterior:
    """Laplace predictive latent marginals (mean, std) per query point."""
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    mean = np.empty(len(x_star))
    var = np.empty(len(x_star))
    prior_var = fit.kernel.output_variance
    for start in range(0, len(x_star), chunk):
        xs = x_star[start:start + chunk]
        ks = kernel_matrix(fit.x, xs, fit.kernel)
        mean[start:start + chunk] = ks.T @ fit.grad
        v = solve_triangular(fit.chol_b, fit.sqrt_w[:, None] * ks, lower=True, check_finite=False)
        var[start:start + chunk] = prior_var - (v * v).sum(axis=0)
    var = np.maximum(var, 1e-18)
    return LatentPosterior(mean=mean, std=np.sqrt(var))


def gp_predict(fit: FittedGP, x_star: np.ndarray, mc_samples: int = 1000,
               seed: int = 0, chunk: int = 2048) -> PredictiveBatch:
    """Sample latent marginals, squash through the sigmoid, aggregate."""
    latent = gp_latent_predict(fit, x_star, chunk=chunk)
    rng = np.random.default_rng(seed)
    n = len(latent.mean)
    mean = np.empty(n)
    unc = np.empty(n)
    for start in range(0, n, chunk):
        mu = latent.mean[start:start + chunk]
        sd = latent.std[start:start + chunk]
        draws = expit(mu[None, :] + sd[None, :] * rng.standard_normal((mc_samples, len(mu))))
        est = mc_estimate(draws)
        mean[start:start + chunk] = est.mean
        unc[start:start + chunk] = est.uncertainty
    return PredictiveBatch(mean=mean, uncertainty=unc)


class GPClassifier:
    """Laplace GP classification matching the shared fit/predict contract."""

    algorithm = "gp"

    def __init__(self, length_scale: float = 8.0, output_variance: float = 2.0,
                 optimize: bool = True, opt_subsample: int | None = None,
                 mc_samples: int = 1000, restarts: int = 3):
        self.initial_kernel = RBFKernel(length_scale, output_variance)
        self.optimize = optimize
        self.opt_subsample = opt_subsample
        self.mc_samples = mc_samples
        self.restarts = restarts
        self.fit_result: FittedGP | None = None
        self.inference_seed: int | None = None

    def fit(self, train: Dataset, validation: Dataset | None = None, seed: int = 0):
        ss = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
        self.inference_seed = int(ss[1])
        kernel = self.initial_kernel
        if self.optimize and self.opt_subsample is not None and len(train) > self.opt_subsample:
            # Tune on a subsample, then refit the mode on the full set.
            rng = np.random.default_rng(int(ss[0]))
            idx = rng.choice(len(train), size=self.opt_subsample, replace=False)
            sub = Dataset(train.x[idx], train.y[idx])
            kernel = laplace_fit(sub, kernel, optimize=True, restarts=self.restarts).kernel
            self.fit_result = laplace_fit(train, kernel, optimize=False)
        else:
            self.fit_result = laplace_fit(train, kernel, optimize=self.optimize,
                                          restarts=self.restarts)
        return self

    @property
    def kernel(self) -> RBFKernel:
        if self.fit_result is None:
            raise RuntimeError("classifier is not fitted")
        return self.fit_result.kernel

    def predict(self, x: np.ndarray, seed: int | None = None) -> PredictiveBatch:
        if self.fit_result is None:
            raise RuntimeError("classifier is not fitted")
        inference = self.inference_seed if seed is None else seed
        return gp_predict(self.fit_result, x, mc_samples=self.mc_samples, seed=inference)

    def latent(self, x: np.ndarray) -> LatentPosterior:
        if self.fit_result is None:
            raise RuntimeError("classifier is not fitted")
        return gp_latent_predict(self.fit_result, x)

    def hyperparameters(self) -> dict:
        return {
            "initial_length_scale": self.initial_kernel.length_scale,
            "initial_output_variance": self.initial_kernel.output_variance,
            "optimize": self.optimize,
            "opt_subsample": self.opt_subsample,
            "mc_samples": self.mc_samples,
            "restarts": self.restarts,
        }

    def save_npz(self, path) -> None:
        """Binary checkpoint: training inputs, mode, kernel, Cholesky factor."""
        if self.fit_result is None:
            raise RuntimeError("classifier is not fitted")
        fr = self.fit_result
        np.savez_compressed(
            path,
            x=fr.x, y=fr.y, f_hat=fr.f_hat, grad=fr.grad, sqrt_w=fr.sqrt_w,
            chol_b=fr.chol_b,
            kernel=np.array([fr.kernel.length_scale, fr.kernel.output_variance]),
            jitter=np.array([fr.jitter]),
            log_marginal=np.array([fr.log_marginal]),
            newton_iters=np.array([fr.newton_iters]),
            mc_samples=np.array([self.mc_samples]),
            inference_seed=np.array([self.inference_seed], dtype=np.uint64),
        )

    @classmethod
    def load_npz(cls, path) -> "GPClassifier":
        data = np.load(path)
        kernel = RBFKernel(float(data["kernel"][0]), float(data["kernel"][1]))
        clf = cls(kernel.length_scale, kernel.output_variance,
                  optimize=False, mc_samples=int(data["mc_samples"][0]))
        clf.fit_result = FittedGP(
            x=data["x"], y=data["y"], kernel=kernel, f_hat=data["f_hat"],
            grad=data["grad"], sqrt_w=data["sqrt_w"], chol_b=data["chol_b"],
            jitter=float(data["jitter"][0]), log_marginal=float(data["log_marginal"][0]),
            newton_iters=int(data["newton_iters"][0]))
        clf.inference_seed = int(data["inference_seed"][0])
        return clf
