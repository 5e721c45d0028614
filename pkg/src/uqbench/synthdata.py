"""Radially symmetric two-class synthetic data with an exact class-probability oracle.

Each data point has 2-D Cartesian features whose radius is gamma-distributed
per class and whose polar angle is uniform, so the conditional class
probability depends on the radius alone and is available in closed form
(the long-run frequency distribution, LRFD). Three named generator
configurations are provided: A and B have overlapping but distinct radial
densities, C has identical densities for both classes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import expit, gammaln

__all__ = [
    "ParameterError",
    "GammaClassSpec",
    "LabeledPoint",
    "Dataset",
    "OODGrid",
    "SplitBundle",
    "DATASET_SPECS",
    "DEFAULT_SUBSET_SIZES",
    "gamma_pdf",
    "gamma_logpdf",
    "lrfd",
    "sample_gamma",
    "sample_dataset",
    "make_ood_grid",
    "training_subsets",
    "generate_splits",
    "save_dataset_csv",
    "load_dataset_csv",
    "save_grid_csv",
    "write_manifest",
    "read_manifest",
]


class ParameterError(ValueError):
    """Raised for non-finite or non-positive distribution parameters."""


@dataclass(frozen=True)
class GammaClassSpec:
    """Per-class gamma shape/scale plus class marginals for one generator."""

    alpha1: float
    eta1: float
    alpha2: float
    eta2: float
    prior1: float = 0.5
    prior2: float = 0.5

    def __post_init__(self):
        for name in ("alpha1", "eta1", "alpha2", "eta2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be finite and positive, got {v!r}")
        if not (0.0 <= self.prior1 <= 1.0 and 0.0 <= self.prior2 <= 1.0):
            raise ParameterError("class marginals must lie in [0, 1]")
        if abs(self.prior1 + self.prior2 - 1.0) > 1e-12:
            raise ParameterError("class marginals must sum to 1")

    def class_params(self, label: int) -> tuple[float, float]:
        if label == 1:
            return self.alpha1, self.eta1
        if label == 2:
            return self.alpha2, self.eta2
        raise ValueError(f"label must be 1 or 2, got {label}")

    def to_dict(self) -> dict:
        return {
            "alpha1": self.alpha1,
            "eta1": self.eta1,
            "alpha2": self.alpha2,
            "eta2": self.eta2,
            "prior1": self.prior1,
            "prior2": self.prior2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GammaClassSpec":
        return cls(**{k: float(d[k]) for k in ("alpha1", "eta1", "alpha2", "eta2", "prior1", "prior2")})


#: Named generator configurations used throughout the study.
DATASET_SPECS: dict[str, GammaClassSpec] = {
    "A": GammaClassSpec(2.0, 5.0, 6.0, 3.0),
    "B": GammaClassSpec(2.0, 3.0, 4.0, 3.0),
    "C": GammaClassSpec(6.0, 3.0, 6.0, 3.0),
}

#: Nested training-subset sizes used in the data-size sweep.
DEFAULT_SUBSET_SIZES: tuple[int, ...] = (250, 500, 1000, 2000, 3000, 5000, 10000)


class LabeledPoint(NamedTuple):
    x1: float
    x2: float
    label: tuple[int, int]  # one-hot over (class 1, class 2)

    @property
    def r(self) -> float:
        return math.hypot(self.x1, self.x2)


@dataclass
class Dataset:
    """A sample of labeled 2-D points. ``y`` holds integer labels in {1, 2}."""

    x: np.ndarray  # (n, 2) float
    y: np.ndarray  # (n,) int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[1] != 2:
            raise ValueError("x must have shape (n, 2)")
        if self.y.shape != (self.x.shape[0],):
            raise ValueError("y must have shape (n,)")
        if not np.isin(self.y, (1, 2)).all():
            raise ValueError("labels must be 1 or 2")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def radii(self) -> np.ndarray:
        return np.hypot(self.x[:, 0], self.x[:, 1])

    @property
    def onehot(self) -> np.ndarray:
        """(n, 2) one-hot label matrix, column 0 = class 1."""
        out = np.zeros((len(self), 2))
        out[np.arange(len(self)), self.y - 1] = 1.0
        return out

    def points(self) -> Iterator[LabeledPoint]:
        for (x1, x2), label in zip(self.x, self.y):
            onehot = (1, 0) if label == 1 else (0, 1)
            yield LabeledPoint(float(x1), float(x2), onehot)

    def prefix(self, n: int) -> "Dataset":
        if n > len(self):
            raise ValueError(f"requested {n} points but only {len(self)} available")
        return Dataset(self.x[:n].copy(), self.y[:n].copy())


def gamma_logpdf(r, alpha: float, eta: float):
    """Log density of the gamma distribution with shape ``alpha``, scale ``eta``.

    ``r = 0`` maps to the pointwise limit: -inf for alpha > 1, log(1/eta)
    for alpha = 1, +inf for alpha < 1.
    """
    _check_gamma_params(alpha, eta)
    r = np.asarray(r, dtype=float)
    if (r < 0).any():
        raise ValueError("radius must be nonnegative")
    norm = gammaln(alpha) + alpha * np.log(eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (alpha - 1.0) * np.log(r) - r / eta - norm
    if alpha == 1.0:
        out = np.where(r == 0.0, -norm, out)
    return out if out.shape else float(out)


def gamma_pdf(r, alpha: float, eta: float):
    """Gamma density r^(alpha-1) exp(-r/eta) / (Gamma(alpha) eta^alpha)."""
    logp = np.asarray(gamma_logpdf(r, alpha, eta))
    with np.errstate(over="ignore"):
        out = np.exp(logp)
    return out if out.shape else float(out)


def _check_gamma_params(alpha: float, eta: float) -> None:
    if not (np.isfinite(alpha) and alpha > 0):
        raise ParameterError(f"shape must be finite and positive, got {alpha!r}")
    if not (np.isfinite(eta) and eta > 0):
        raise ParameterError(f"scale must be finite and positive, got {eta!r}")


def lrfd(r, spec: GammaClassSpec, return_flags: bool = False):
    """Exact conditional class-2 probability at radius ``r``.

    Evaluated entirely in log-density space so the deep tails (where the
    linear-space gamma densities underflow to zero) stay well defined. When
    ``return_flags`` is set, also returns a boolean mask marking the points
    where a linear-space evaluation would have underflowed in both classes
    and the log-space route was the only viable one.
    """
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if (r < 0).any():
        raise ValueError("radius must be nonnegative")

    # Log-density difference class1 - class2; its sign decides the tails.
    const = (
        gammaln(spec.alpha2) + spec.alpha2 * np.log(spec.eta2)
        - gammaln(spec.alpha1) - spec.alpha1 * np.log(spec.eta1)
        + np.log(spec.prior1) - np.log(spec.prior2)
    )
    dalpha = spec.alpha1 - spec.alpha2
    drate = 1.0 / spec.eta1 - 1.0 / spec.eta2
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = dalpha * np.log(r) if dalpha != 0.0 else np.zeros_like(r)
    delta = log_term - r * drate + const

    # r = 0 with unequal shapes: the smaller shape's density dominates.
    zero = r == 0.0
    if zero.any() and dalpha != 0.0:
        delta = np.where(zero, np.inf if dalpha < 0 else -np.inf, delta)

    prob2 = expit(-delta)
    if not return_flags:
        return float(prob2[0]) if scalar else prob2

    with np.errstate(over="ignore", invalid="ignore"):
        lin1 = gamma_pdf(r, spec.alpha1, spec.eta1)
        lin2 = gamma_pdf(r, spec.alpha2, spec.eta2)
    flags = (np.asarray(lin1) == 0.0) & (np.asarray(lin2) == 0.0)
    if scalar:
        return float(prob2[0]), bool(flags[0])
    return prob2, flags


def sample_gamma(rng: np.random.Generator, alpha: float, eta: float, size: int) -> np.ndarray:
    """Draw gamma variates by the Marsaglia-Tsang squeeze method.

    Uses the cube-of-normal transformation with the squeeze acceptance test
    for alpha >= 1 and the u^(1/alpha) boost for alpha < 1.
    """
    _check_gamma_params(alpha, eta)
    size = int(size)
    if size < 0:
        raise ValueError("size must be nonnegative")
    if size == 0:
        return np.empty(0)

    boosted = alpha < 1.0
    shape = alpha + 1.0 if boosted else alpha
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)

    out = np.empty(size)
    filled = 0
    while filled < size:
        m = size - filled
        x = rng.standard_normal(m)
        v = (1.0 + c * x) ** 3
        u = rng.random(m)
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            squeeze = u < 1.0 - 0.0331 * x**4
            log_test = np.log(u) < 0.5 * x**2 + d * (1.0 - v + np.log(v))
        accept = ok & (squeeze | log_test)
        n_acc = int(accept.sum())
        out[filled:filled + n_acc] = d * v[accept]
        filled += n_acc

    if boosted:
        out *= rng.random(size) ** (1.0 / alpha)
    return out * eta


def sample_dataset(spec: GammaClassSpec, n: int, seed=None, rng: np.random.Generator | None = None) -> Dataset:
    """Sample ``n`` labeled points: class from the marginal, radius from the
    class gamma, angle uniform on [0, 2pi)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    labels = np.where(rng.random(n) < spec.prior2, 2, 1).astype(np.int64)
    radii = np.empty(n)
    for label in (1, 2):
        mask = labels == label
        alpha, eta = spec.class_params(label)
        radii[mask] = sample_gamma(rng, alpha, eta, int(mask.sum()))
    phi = rng.random(n) * (2.0 * np.pi)
    x = np.column_stack([radii * np.cos(phi), radii * np.sin(phi)])
    return Dataset(x, labels)


@dataclass
class OODGrid:
    """Polar evaluation grid far outside the training support.

    130 points: 5 equally spaced polar angles x 26 log-equispaced radii
    between 700 and 1000 inclusive, ordered angle-major.
    """

    angles: np.ndarray = field(default_factory=lambda: np.arange(5) * (2.0 * np.pi / 5.0))
    radii: np.ndarray = field(default_factory=lambda: np.geomspace(700.0, 1000.0, 26))

    @property
    def x(self) -> np.ndarray:
        """(130, 2) Cartesian coordinates."""
        ang = np.repeat(self.angles, len(self.radii))
        rad = np.tile(self.radii, len(self.angles))
        return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])

    @property
    def point_angles(self) -> np.ndarray:
        return np.repeat(self.angles, len(self.radii))

    @property
    def point_radii(self) -> np.ndarray:
        return np.tile(self.radii, len(self.angles))

    def __len__(self) -> int:
        return len(self.angles) * len(self.radii)


def make_ood_grid() -> OODGrid:
    return OODGrid()


def training_subsets(train: Dataset, sizes: Sequence[int] = DEFAULT_SUBSET_SIZES) -> list[Dataset]:
    """Nested prefixes of an already-shuffled training pool, one per size."""
    sizes = list(sizes)
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if max(sizes) > len(train):
        raise ValueError(f"largest subset size {max(sizes)} exceeds pool size {len(train)}")
    return [train.prefix(s) for s in sizes]


# ---------------------------------------------------------------------------
# Split generation and file formats
# ---------------------------------------------------------------------------

@dataclass
class SplitBundle:
    name: str
    spec: GammaClassSpec
    train: Dataset
    validation: Dataset
    test: Dataset
    grid: OODGrid
    manifest: dict


def generate_splits(name: str, seed: int, sizes: tuple[int, int, int] = (10000, 5000, 10000)) -> SplitBundle:
    """Generate train/validation/test splits plus the OOD grid for a named spec.

    The training pool is shuffled once with a dedicated child stream before
    any prefix-slicing so nested subsets are well defined; the manifest
    records the root seed and that discipline.
    """
    if name not in DATASET_SPECS:
        raise KeyError(f"unknown dataset {name!r}; choose from {sorted(DATASET_SPECS)}")
    spec = DATASET_SPECS[name]
    n_train, n_val, n_test = sizes
    ss = np.random.SeedSequence(seed)
    train_ss, val_ss, test_ss, shuffle_ss = ss.spawn(4)

    train = sample_dataset(spec, n_train, rng=np.random.default_rng(train_ss))
    perm = np.random.default_rng(shuffle_ss).permutation(n_train)
    train = Dataset(train.x[perm], train.y[perm])
    validation = sample_dataset(spec, n_val, rng=np.random.default_rng(val_ss))
    test = sample_dataset(spec, n_test, rng=np.random.default_rng(test_ss))

    manifest = {
        "dataset": name,
        "spec": spec.to_dict(),
        "seed": int(seed),
        "sizes": {"train": n_train, "validation": n_val, "test": n_test},
        "subset_rule": "training pool shuffled once with a dedicated child stream; "
                       "a subset of size s is the first s rows of train.csv",
        "ood_grid": {"angles": 5, "radii": 26, "r_min": 700.0, "r_max": 1000.0, "spacing": "log"},
    }
    return SplitBundle(name, spec, train, validation, test, make_ood_grid(), manifest)


def save_dataset_csv(path, ds: Dataset) -> None:
    """Write ``x1,x2,class`` rows, class in {1, 2}."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "class"])
        for (x1, x2), label in zip(ds.x, ds.y):
            writer.writerow([repr(float(x1)), repr(float(x2)), int(label)])


def load_dataset_csv(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns x1,x2,class")
    return Dataset(data[:, :2], data[:, 2].astype(np.int64))


def save_grid_csv(path, grid: OODGrid) -> None:
    path = Path(path)
    pts = grid.x
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "angle", "radius"])
        for (x1, x2), ang, rad in zip(pts, grid.point_angles, grid.point_radii):
            writer.writerow([repr(float(x1)), repr(float(x2)), repr(float(ang)), repr(float(rad))])


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return json.loads(path.read_text())
