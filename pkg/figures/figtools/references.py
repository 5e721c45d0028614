"""Reference curves rebuilt from the bundle manifest, never hard-coded.

The study manifest records the per-class gamma shape/scale and class
marginals of the generator; from those the exact class-2 probability curve
is recomputed here (independently of the harness), along with the
flat-prior posterior standard deviation used as the dashed line in the
out-of-distribution uncertainty panels.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy import stats


def load_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return json.loads(path.read_text())


def oracle_curve(manifest: dict, radii) -> np.ndarray:
    """Exact conditional class-2 probability at the given radii."""
    spec = manifest["spec"]
    radii = np.asarray(radii, dtype=float)
    with np.errstate(divide="ignore"):
        log1 = stats.gamma.logpdf(radii, spec["alpha1"], scale=spec["eta1"]) + math.log(spec["prior1"])
        log2 = stats.gamma.logpdf(radii, spec["alpha2"], scale=spec["eta2"]) + math.log(spec["prior2"])
    out = np.empty_like(radii)
    both = np.isfinite(log1) & np.isfinite(log2)
    out[both] = 1.0 / (1.0 + np.exp(log1[both] - log2[both]))
    only1 = np.isfinite(log1) & ~np.isfinite(log2)
    only2 = ~np.isfinite(log1) & np.isfinite(log2)
    out[only1] = 0.0
    out[only2] = 1.0
    out[~np.isfinite(log1) & ~np.isfinite(log2)] = np.nan
    return out


def flat_prior_one_observation_std(manifest: dict) -> float:
    """Std of the Beta posterior after one observation under the flat prior.

    Computed from the posterior-variance formula E(1-E)/(N + 2c + 1) with
    N = S = 1 and the symmetric prior strength recorded in the manifest
    (c = 1 unless a study overrides it).
    """
    c = float(manifest.get("class_prior_strength", 1.0))
    mean = (1.0 + c) / (1.0 + 2.0 * c)
    return math.sqrt(mean * (1.0 - mean) / (1.0 + 2.0 * c + 1.0))
