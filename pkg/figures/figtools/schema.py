"""Column contracts for the harness CSV bundle, with loading and validation."""

from __future__ import annotations

from pathlib import Path

import pandas as pd


class SchemaError(ValueError):
    """An input CSV does not carry the columns a figure family needs."""


#: Required columns per figure family input file.
REQUIRED_COLUMNS = {
    "profiles": (
        "dataset", "algorithm", "n_train", "r_center", "n_points", "mean_prob",
        "min_prob", "max_prob", "mean_uncertainty", "min_uncertainty",
        "max_uncertainty", "lrfd_center",
    ),
    "metrics": (
        "dataset", "algorithm", "n_train", "accuracy", "ece", "log_loss",
        "z_score", "wasserstein1", "mean_kl", "bayes_accuracy",
    ),
    "ood": (
        "dataset", "algorithm", "n_train", "ood_mean_prob", "ood_prob_angle_min",
        "ood_prob_angle_max", "ood_mean_uncertainty", "ood_unc_angle_min",
        "ood_unc_angle_max", "mean_test_uncertainty",
    ),
    "grid": (
        "dataset", "algorithm", "n_train", "size", "column_param", "column_value",
        "val_accuracy", "val_wasserstein1", "ood_mean_prob", "ood_prob_p2_5",
        "ood_prob_p97_5", "ood_mean_uncertainty", "ood_unc_p2_5", "ood_unc_p97_5",
    ),
    "spatial": (
        "dataset", "algorithm", "n_train", "x1", "x2", "mean_prob",
        "uncertainty", "lrfd", "abs_diff",
    ),
}

#: Default file name per family inside a report bundle.
BUNDLE_FILES = {
    "profiles": "profiles.csv",
    "metrics": "metrics.csv",
    "ood": "ood.csv",
    "grid": "grid.csv",
    "spatial": "spatial.csv",
}


def load_family_csv(path, family: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    frame = pd.read_csv(path)
    required = REQUIRED_COLUMNS[family]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(
            f"{path} is missing required column(s) {missing} for the "
            f"'{family}' figure family")
    return frame
