"""Experiment orchestration: data-size sweeps, grid search, OOD evaluation,
the identical-class control, and CSV/JSON persistence.

All randomness flows from a single root seed: the dataset splits use the
root directly, and every (algorithm, n_train) run derives its own stream
from the root through a documented spawn key, so any record is reproducible
from its fingerprint alone.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path

import numpy as np

from . import neuralnet as nn
from .classifiers import (
    ConflictualEnsembleClassifier,
    DropoutClassifier,
    EnsembleClassifier,
    EvidentialClassifier,
)
from .dpmm import DPMMClassifier
from .gp import GPClassifier
from .metrics import EvaluationBatch, accuracy, ece, log_loss, mean_kl, wasserstein1, z_score
from .posterior import PredictiveBatch
from .synthdata import (
    DATASET_SPECS,
    Dataset,
    SplitBundle,
    generate_splits,
    lrfd,
    save_dataset_csv,
    save_grid_csv,
    write_manifest,
)

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "FingerprintMismatch",
    "StudySettings",
    "ALGORITHMS",
    "RECORD_COLUMNS",
    "PROFILE_COLUMNS",
    "GRID_COLUMNS",
    "SPATIAL_COLUMNS",
    "build_classifier",
    "run_study",
    "run_grid",
    "radial_profile",
    "evaluate_predictions",
    "fingerprint",
    "parse_config_text",
    "settings_from_file",
    "write_rows",
    "read_rows",
    "report",
    "nearest_rank_percentile",
]

ALGORITHMS = ("nne", "cl", "edl", "mcd", "gp", "dpmm")

#: Nonparametric fits on the identical-class generator are capped at this
#: training size; the cap is recorded on the run record.
IDENTICAL_CLASS_CAP = 2000
_NONPARAMETRIC = ("gp", "dpmm")


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


class FingerprintMismatch(RuntimeError):
    """A checkpoint's stored fingerprint does not match its stored config."""


@dataclass(frozen=True)
class StudySettings:
    """All protocol constants for one study; defaults mirror the main runs.

    ``fast()`` shrinks the expensive knobs to desk scale: three training
    sizes, 10-member ensembles, 5 candidate networks, fewer dropout passes,
    reduced MCMC budgets, and GP hyperparameter tuning on a subsample.
    """

    dataset: str = "A"
    algorithms: tuple[str, ...] = ALGORITHMS
    n_train: tuple[int, ...] = (250, 500, 1000, 2000, 3000, 5000, 10000)
    seed: int = 0

    # Shared network protocol.
    size: str = "medium"
    learning_rate: float = 0.001
    weight_decay: float = 0.01
    max_epochs: int = 200
    patience: int = 20

    # Algorithm-specific study values.
    ensemble_size: int = 20
    beta: float = 0.1
    lambda0: float = 0.002
    dropout: float = 0.3
    candidates: int = 20
    mcd_passes: int = 500
    gp_mc_samples: int = 1000
    gp_optimize: bool = True
    gp_opt_subsample: int | None = None
    gp_restarts: int = 3
    dpmm_truncation: int = 64
    dpmm_concentration: float = 1.0
    dpmm_chains: int = 4
    dpmm_burn_in: int = 900
    dpmm_samples: int = 300

    # Grid-search axes.
    grid_n_train: tuple[int, ...] = (250, 1000, 5000)
    grid_sizes: tuple[str, ...] = ("small", "medium", "large")
    grid_weight_decays: tuple[float, ...] = (0.1, 0.01, 0.001)
    grid_members: int = 20

    # Evaluation details.
    profile_r_max: float = 60.0
    profile_bin_width: float = 2.5
    spatial: bool = False
    spatial_extent: float = 45.0
    spatial_points: int = 41

    workers: int = 1
    out_dir: str = "study_out"

    def __post_init__(self):
        if self.dataset not in DATASET_SPECS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms: {sorted(unknown)}")

    @classmethod
    def fast(cls, **overrides) -> "StudySettings":
        fast_values = dict(
            n_train=(250, 1000, 5000),
            ensemble_size=10,
            candidates=5,
            mcd_passes=200,
            gp_opt_subsample=1000,
            dpmm_chains=2,
            dpmm_burn_in=300,
            dpmm_samples=150,
            grid_members=4,
            grid_sizes=("small", "medium"),
            grid_n_train=(250, 1000),
        )
        fast_values.update(overrides)
        return cls(**fast_values)

    def to_dict(self) -> dict:
        return asdict(self)


def fingerprint(payload: dict) -> str:
    """Stable short hash of a JSON-serializable configuration payload."""
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Config files: plain "key = value" lines, one setting per line.
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Parse the canonical key-value config format.

    Lines are ``key = value`` with ``#`` comments; values are JSON scalars,
    or comma-separated lists of JSON scalars.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = _parse_value(value, lineno)
    return out


def _parse_value(value: str, lineno: int):
    def scalar(tok: str):
        try:
            return json.loads(tok)
        except json.JSONDecodeError:
            return tok
    if "," in value:
        return tuple(scalar(tok.strip()) for tok in value.split(",") if tok.strip())
    if value == "":
        raise ConfigError(f"line {lineno}: empty value")
    return scalar(value)


def settings_from_file(path) -> StudySettings:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    raw = parse_config_text(path.read_text())
    fast = bool(raw.pop("fast", False))
    valid = set(StudySettings.__dataclass_fields__)
    unknown = set(raw) - valid
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("algorithms", "n_train", "grid_n_train", "grid_sizes", "grid_weight_decays"):
        if key in raw and not isinstance(raw[key], tuple):
            raw[key] = (raw[key],)
    try:
        return StudySettings.fast(**raw) if fast else StudySettings(**raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


# ---------------------------------------------------------------------------
# Classifier construction and seed discipline
# ---------------------------------------------------------------------------

def _run_seed(settings: StudySettings, algorithm: str, n_train: int, salt: int = 0) -> int:
    """Per-run seed: root seed stream-split by (algorithm, n_train, salt)."""
    key = (1 + ALGORITHMS.index(algorithm), int(n_train), int(salt))
    ss = np.random.SeedSequence(entropy=settings.seed, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def build_classifier(settings: StudySettings, algorithm: str, n_train: int):
    mlp = nn.MLPConfig.sized(settings.size)
    common = dict(
        learning_rate=settings.learning_rate,
        weight_decay=settings.weight_decay,
        max_epochs=settings.max_epochs,
        patience=settings.patience,
        batch_size=nn.batch_size_for(n_train),
    )
    if algorithm == "nne":
        return EnsembleClassifier(mlp=mlp, n_members=settings.ensemble_size, **common)
    if algorithm == "cl":
        return ConflictualEnsembleClassifier(beta=settings.beta, mlp=mlp,
                                             n_members=settings.ensemble_size, **common)
    if algorithm == "edl":
        return EvidentialClassifier(mlp=mlp, lambda0=settings.lambda0,
                                    n_candidates=settings.candidates, **common)
    if algorithm == "mcd":
        return DropoutClassifier(mlp=mlp, dropout_rate=settings.dropout,
                                 passes=settings.mcd_passes,
                                 n_candidates=settings.candidates, **common)
    if algorithm == "gp":
        return GPClassifier(optimize=settings.gp_optimize,
                            opt_subsample=settings.gp_opt_subsample,
                            mc_samples=settings.gp_mc_samples,
                            restarts=settings.gp_restarts)
    if algorithm == "dpmm":
        return DPMMClassifier(truncation=settings.dpmm_truncation,
                              concentration=settings.dpmm_concentration,
                              chains=settings.dpmm_chains,
                              burn_in=settings.dpmm_burn_in,
                              samples=settings.dpmm_samples)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


# ---------------------------------------------------------------------------
# Evaluation helpers
# ---------------------------------------------------------------------------

def evaluate_predictions(pred: PredictiveBatch, test: Dataset, spec) -> dict:
    """All six test-set summary metrics for one predictor."""
    nu = lrfd(test.radii, spec)
    batch = EvaluationBatch(pred.mean, test.y, nu)
    return {
        "accuracy": accuracy(batch),
        "ece": ece(batch),
        "log_loss": log_loss(batch),
        "z_score": z_score(batch),
        "wasserstein1": wasserstein1(batch),
        "mean_kl": mean_kl(batch),
    }


def bayes_accuracy(test: Dataset, spec) -> float:
    """Accuracy of thresholding the exact oracle on this test sample."""
    nu = lrfd(test.radii, spec)
    batch = EvaluationBatch(nu, test.y, nu)
    return accuracy(batch)


def ood_summary(pred: PredictiveBatch, grid) -> dict:
    """Grid averages plus the spread of per-angle means over polar angle."""
    probs, uncs = pred.mean, pred.uncertainty
    angle_means_p, angle_means_u = [], []
    for ang in grid.angles:
        mask = grid.point_angles == ang
        angle_means_p.append(float(probs[mask].mean()))
        angle_means_u.append(float(uncs[mask].mean()))
    out = {
        "ood_mean_prob": float(probs.mean()),
        "ood_prob_angle_min": min(angle_means_p),
        "ood_prob_angle_max": max(angle_means_p),
        "ood_mean_uncertainty": float(uncs.mean()),
        "ood_unc_angle_min": min(angle_means_u),
        "ood_unc_angle_max": max(angle_means_u),
    }
    flags = pred.tail_flags
    out["tail_flag_fraction"] = float(flags.mean()) if flags is not None else 0.0
    return out


def radial_profile(pred: PredictiveBatch, points: np.ndarray, bin_edges: np.ndarray, spec) -> list[dict]:
    """Per-radial-bin aggregates: mean estimate, full spread, oracle at center.

    Empty bins are omitted (missing rows).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) == 0:
        raise ValueError("profile requires at least one point")
    radii = np.hypot(points[:, 0], points[:, 1])
    rows = []
    for lo, hi in zip(bin_edges[:-1], bin_edges[1:]):
        mask = (radii >= lo) & (radii < hi)
        n = int(mask.sum())
        if n == 0:
            continue
        center = 0.5 * (lo + hi)
        rows.append({
            "r_lo": float(lo),
            "r_hi": float(hi),
            "r_center": float(center),
            "n_points": n,
            "mean_prob": float(pred.mean[mask].mean()),
            "min_prob": float(pred.mean[mask].min()),
            "max_prob": float(pred.mean[mask].max()),
            "mean_uncertainty": float(pred.uncertainty[mask].mean()),
            "min_uncertainty": float(pred.uncertainty[mask].min()),
            "max_uncertainty": float(pred.uncertainty[mask].max()),
            "lrfd_center": float(lrfd(center, spec)),
        })
    return rows


def nearest_rank_percentile(values, q: float) -> float:
    """Nearest-rank percentile: value at rank ceil(q/100 * n) of the sorted list."""
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise ValueError("percentile of empty list")
    rank = int(np.ceil(q / 100.0 * arr.size))
    return float(arr[max(rank, 1) - 1])


# ---------------------------------------------------------------------------
# Study runs
# ---------------------------------------------------------------------------

RECORD_COLUMNS = (
    "dataset", "algorithm", "n_train", "seed", "fingerprint", "status",
    "accuracy", "ece", "log_loss", "z_score", "wasserstein1", "mean_kl",
    "mean_test_uncertainty", "ood_mean_prob", "ood_prob_angle_min",
    "ood_prob_angle_max", "ood_mean_uncertainty", "ood_unc_angle_min",
    "ood_unc_angle_max", "bayes_accuracy", "diverged_members",
    "capped_n_train", "tail_flag_fraction", "wall_time_s",
)

PROFILE_COLUMNS = (
    "dataset", "algorithm", "n_train", "r_lo", "r_hi", "r_center", "n_points",
    "mean_prob", "min_prob", "max_prob", "mean_uncertainty", "min_uncertainty",
    "max_uncertainty", "lrfd_center",
)

SPATIAL_COLUMNS = (
    "dataset", "algorithm", "n_train", "x1", "x2", "mean_prob", "uncertainty",
    "lrfd", "abs_diff",
)

GRID_COLUMNS = (
    "dataset", "algorithm", "n_train", "size", "weight_decay", "column_param",
    "column_value", "learning_rate", "fingerprint", "status", "val_accuracy",
    "val_wasserstein1", "ood_mean_prob", "ood_prob_p2_5", "ood_prob_p97_5",
    "ood_mean_uncertainty", "ood_unc_p2_5", "ood_unc_p97_5", "poorly_fitted",
    "diverged_members",
)


def _effective_n_train(settings: StudySettings, algorithm: str, n_train: int) -> tuple[int, bool]:
    if settings.dataset == "C" and algorithm in _NONPARAMETRIC and n_train > IDENTICAL_CLASS_CAP:
        return IDENTICAL_CLASS_CAP, True
    return n_train, False


def run_fingerprint(settings: StudySettings, algorithm: str, n_train: int) -> str:
    payload = {"settings": settings.to_dict(), "algorithm": algorithm, "n_train": n_train}
    return fingerprint(payload)


def _nan_metrics() -> dict:
    keys = ("accuracy", "ece", "log_loss", "z_score", "wasserstein1", "mean_kl",
            "mean_test_uncertainty", "ood_mean_prob", "ood_prob_angle_min",
            "ood_prob_angle_max", "ood_mean_uncertainty", "ood_unc_angle_min",
            "ood_unc_angle_max", "tail_flag_fraction")
    return {k: float("nan") for k in keys}


def run_single(settings: StudySettings, algorithm: str, n_train: int,
               bundle: SplitBundle) -> tuple[dict, list[dict], list[dict]]:
    """One (algorithm, n_train) run: fit, evaluate test + OOD, build profiles.

    Returns (record, profile rows, spatial rows). A diverged run yields a
    record with status "diverged" and NaN metrics rather than no record.
    """
    spec = bundle.spec
    eff_n, capped = _effective_n_train(settings, algorithm, n_train)
    train = bundle.train.prefix(eff_n)
    seed = _run_seed(settings, algorithm, n_train)
    clf = build_classifier(settings, algorithm, eff_n)
    record: dict = {
        "dataset": settings.dataset,
        "algorithm": algorithm,
        "n_train": n_train,
        "seed": seed,
        "fingerprint": run_fingerprint(settings, algorithm, n_train),
        "status": "ok",
        "bayes_accuracy": bayes_accuracy(bundle.test, spec),
        "diverged_members": 0,
        "capped_n_train": eff_n if capped else n_train,
    }
    started = time.perf_counter()
    try:
        clf.fit(train, bundle.validation, seed)
    except nn.TrainingDiverged as err:
        log.warning("run %s n=%d diverged: %s", algorithm, n_train, err)
        record.update(_nan_metrics())
        record["status"] = "diverged"
        record["diverged_members"] = getattr(clf, "diverged_members", -1)
        record["wall_time_s"] = round(time.perf_counter() - started, 3)
        return record, [], []

    test_pred = clf.predict(bundle.test.x)
    ood_pred = clf.predict(bundle.grid.x)
    record.update(evaluate_predictions(test_pred, bundle.test, spec))
    record["mean_test_uncertainty"] = float(test_pred.uncertainty.mean())
    record.update(ood_summary(ood_pred, bundle.grid))
    record["diverged_members"] = getattr(clf, "diverged_members", 0)
    record["wall_time_s"] = round(time.perf_counter() - started, 3)

    edges = np.arange(0.0, settings.profile_r_max + settings.profile_bin_width,
                      settings.profile_bin_width)
    meta = {"dataset": settings.dataset, "algorithm": algorithm, "n_train": n_train}
    profiles = [meta | row for row in radial_profile(test_pred, bundle.test.x, edges, spec)]

    spatial_rows: list[dict] = []
    if settings.spatial:
        axis = np.linspace(-settings.spatial_extent, settings.spatial_extent,
                           settings.spatial_points)
        g1, g2 = np.meshgrid(axis, axis)
        lattice = np.column_stack([g1.ravel(), g2.ravel()])
        sp_pred = clf.predict(lattice)
        nu = lrfd(np.hypot(lattice[:, 0], lattice[:, 1]), spec)
        for (x1, x2), m, u, v in zip(lattice, sp_pred.mean, sp_pred.uncertainty, nu):
            spatial_rows.append(meta | {
                "x1": float(x1), "x2": float(x2), "mean_prob": float(m),
                "uncertainty": float(u), "lrfd": float(v), "abs_diff": abs(float(m) - float(v)),
            })
    return record, profiles, spatial_rows


def _study_task(args):
    settings_dict, algorithm, n_train = args
    settings = StudySettings(**settings_dict)
    bundle = generate_splits(settings.dataset, settings.seed)
    return run_single(settings, algorithm, n_train, bundle)


def run_study(settings: StudySettings, bundle: SplitBundle | None = None,
              write: bool = True) -> list[dict]:
    """Full sweep over (algorithm, n_train); persists records and profiles."""
    if bundle is None:
        bundle = generate_splits(settings.dataset, settings.seed)
    tasks = [(algorithm, n) for algorithm in settings.algorithms for n in settings.n_train]

    results = []
    if settings.workers > 1:
        args = [(settings.to_dict(), a, n) for a, n in tasks]
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(_study_task, args))
    else:
        for algorithm, n in tasks:
            log.info("study: %s n_train=%d", algorithm, n)
            results.append(run_single(settings, algorithm, n, bundle))

    records = [r for r, _, _ in results]
    profiles = [row for _, rows, _ in results for row in rows]
    spatial = [row for _, _, rows in results for row in rows]
    if write:
        out = Path(settings.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "records.csv", records, RECORD_COLUMNS)
        write_rows(out / "profiles.csv", profiles, PROFILE_COLUMNS)
        if spatial:
            write_rows(out / "spatial.csv", spatial, SPATIAL_COLUMNS)
        _write_study_manifest(out, settings, bundle)
    return records


def _write_study_manifest(out: Path, settings: StudySettings, bundle: SplitBundle) -> None:
    manifest = dict(bundle.manifest)
    manifest["settings"] = settings.to_dict()
    manifest["fingerprint"] = fingerprint(settings.to_dict())
    write_manifest(out / "manifest.json", manifest)


def export_bundle_csvs(settings: StudySettings, bundle: SplitBundle, out_dir) -> None:
    """Write the dataset split CSVs, OOD grid CSV and manifest for one bundle."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(out / "train.csv", bundle.train)
    save_dataset_csv(out / "validation.csv", bundle.validation)
    save_dataset_csv(out / "test.csv", bundle.test)
    save_grid_csv(out / "ood_grid.csv", bundle.grid)
    write_manifest(out / "manifest.json", bundle.manifest)


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

#: Per-algorithm figure-column axis; the other algorithms' learning rates are
#: pinned at the values used in their sweeps.
GRID_COLUMN_AXES: dict[str, tuple[str, tuple[float, ...], float]] = {
    # algorithm: (column parameter, values, fixed learning rate or nan)
    "nne": ("learning_rate", (0.01, 0.001, 0.0001), float("nan")),
    "cl": ("beta", (0.1, 0.2, 0.5), 0.001),
    "edl": ("lambda0", (0.0002, 0.002, 0.02), 0.0001),
    "mcd": ("dropout", (0.1, 0.3, 0.5), 0.001),
}


def grid_cells(settings: StudySettings, algorithm: str) -> list[dict]:
    """Enumerate grid cells: column axis x weight decay x size x n_train."""
    if algorithm not in GRID_COLUMN_AXES:
        raise ConfigError(f"grid search is defined for {sorted(GRID_COLUMN_AXES)}, got {algorithm!r}")
    param, values, fixed_lr = GRID_COLUMN_AXES[algorithm]
    cells = []
    for value, wd, size, n in product(values, settings.grid_weight_decays,
                                      settings.grid_sizes, settings.grid_n_train):
        lr = value if param == "learning_rate" else fixed_lr
        cells.append({
            "algorithm": algorithm, "column_param": param, "column_value": value,
            "weight_decay": wd, "size": size, "n_train": n, "learning_rate": lr,
        })
    return cells


def _grid_classifier(settings: StudySettings, cell: dict):
    mlp = nn.MLPConfig.sized(cell["size"])
    common = dict(
        learning_rate=cell["learning_rate"],
        weight_decay=cell["weight_decay"],
        max_epochs=settings.max_epochs,
        patience=settings.patience,
        batch_size=nn.batch_size_for(cell["n_train"]),
    )
    algorithm = cell["algorithm"]
    members = settings.grid_members
    if algorithm == "nne":
        return EnsembleClassifier(mlp=mlp, n_members=members, **common)
    if algorithm == "cl":
        return ConflictualEnsembleClassifier(beta=cell["column_value"], mlp=mlp,
                                             n_members=members, **common)
    if algorithm == "edl":
        return EvidentialClassifier(mlp=mlp, lambda0=cell["column_value"],
                                    n_candidates=members, keep_candidates=True, **common)
    if algorithm == "mcd":
        return DropoutClassifier(mlp=mlp, dropout_rate=cell["column_value"],
                                 passes=settings.mcd_passes,
                                 n_candidates=members, keep_candidates=True, **common)
    raise ConfigError(f"unknown grid algorithm {algorithm!r}")


def _member_ood_probs(clf, grid_x: np.ndarray) -> list[float]:
    """Mean OOD class-2 probability per ensemble member / trained candidate."""
    if isinstance(clf, EnsembleClassifier):
        return [float(row.mean()) for row in clf.member_probs(grid_x)]
    if getattr(clf, "candidate_weights", None):
        return [float(nn.forward(w, grid_x)[1][:, 1].mean()) for w in clf.candidate_weights]
    return [float(clf.predict(grid_x).mean.mean())]


def run_grid_cell(settings: StudySettings, cell: dict, bundle: SplitBundle) -> dict:
    spec = bundle.spec
    train = bundle.train.prefix(cell["n_train"])
    seed = _run_seed(settings, cell["algorithm"], cell["n_train"],
                     salt=hash_cell(cell))
    clf = _grid_classifier(settings, cell)
    row = {"dataset": settings.dataset, **cell,
           "fingerprint": fingerprint({"settings": settings.to_dict(), "cell": cell}),
           "status": "ok"}
    try:
        clf.fit(train, bundle.validation, seed)
    except nn.TrainingDiverged:
        row.update({k: float("nan") for k in (
            "val_accuracy", "val_wasserstein1", "ood_mean_prob", "ood_prob_p2_5",
            "ood_prob_p97_5", "ood_mean_uncertainty", "ood_unc_p2_5", "ood_unc_p97_5")})
        row["status"] = "diverged"
        row["poorly_fitted"] = True
        row["diverged_members"] = getattr(clf, "diverged_members", -1)
        return row

    val_pred = clf.predict(bundle.validation.x)
    nu = lrfd(bundle.validation.radii, spec)
    batch = EvaluationBatch(val_pred.mean, bundle.validation.y, nu)
    val_acc = accuracy(batch)
    ood_pred = clf.predict(bundle.grid.x)
    member_probs = _member_ood_probs(clf, bundle.grid.x)
    row.update({
        "val_accuracy": val_acc,
        "val_wasserstein1": wasserstein1(batch),
        "ood_mean_prob": float(ood_pred.mean.mean()),
        "ood_prob_p2_5": nearest_rank_percentile(member_probs, 2.5),
        "ood_prob_p97_5": nearest_rank_percentile(member_probs, 97.5),
        "ood_mean_uncertainty": float(ood_pred.uncertainty.mean()),
        "ood_unc_p2_5": nearest_rank_percentile(ood_pred.uncertainty, 2.5),
        "ood_unc_p97_5": nearest_rank_percentile(ood_pred.uncertainty, 97.5),
        "poorly_fitted": val_acc < 0.70,
        "diverged_members": getattr(clf, "diverged_members", 0),
    })
    return row


def hash_cell(cell: dict) -> int:
    return int(hashlib.sha256(json.dumps(cell, sort_keys=True).encode()).hexdigest()[:8], 16)


def run_grid(settings: StudySettings, algorithm: str, bundle: SplitBundle | None = None,
             write: bool = True) -> list[dict]:
    """Hyperparameter grid for one algorithm; one record per cell."""
    if bundle is None:
        bundle = generate_splits(settings.dataset, settings.seed)
    rows = []
    for cell in grid_cells(settings, algorithm):
        log.info("grid: %s", cell)
        rows.append(run_grid_cell(settings, cell, bundle))
    if write:
        out = Path(settings.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / f"grid_{algorithm}.csv", rows, GRID_COLUMNS)
    return rows


# ---------------------------------------------------------------------------
# CSV plumbing and the report bundle
# ---------------------------------------------------------------------------

def write_rows(path, rows: list[dict], columns: tuple[str, ...]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_rows(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


#: Figure-family CSVs produced by ``report``.
REPORT_FILES = ("metrics.csv", "ood.csv", "profiles.csv", "grid.csv", "spatial.csv")

_METRICS_VIEW = ("dataset", "algorithm", "n_train", "accuracy", "ece", "log_loss",
                 "z_score", "wasserstein1", "mean_kl", "bayes_accuracy", "status")
_OOD_VIEW = ("dataset", "algorithm", "n_train", "ood_mean_prob", "ood_prob_angle_min",
             "ood_prob_angle_max", "ood_mean_uncertainty", "ood_unc_angle_min",
             "ood_unc_angle_max", "mean_test_uncertainty", "status")


def report(study_dir, out_dir) -> list[str]:
    """Merge study outputs into one CSV per figure family.

    Emits metrics.csv and ood.csv views of the records, copies profiles.csv
    and spatial.csv, concatenates any grid_*.csv files into grid.csv, and
    copies the study manifest. Returns the filenames written.
    """
    study = Path(study_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = study / "records.csv"
    if not records_path.exists():
        raise FileNotFoundError(str(records_path))
    records = read_rows(records_path)
    written = []

    write_rows(out / "metrics.csv", records, _METRICS_VIEW)
    write_rows(out / "ood.csv", records, _OOD_VIEW)
    written += ["metrics.csv", "ood.csv"]

    profiles_path = study / "profiles.csv"
    if profiles_path.exists():
        write_rows(out / "profiles.csv", read_rows(profiles_path), PROFILE_COLUMNS)
        written.append("profiles.csv")

    grid_rows = []
    for grid_path in sorted(study.glob("grid_*.csv")):
        grid_rows.extend(read_rows(grid_path))
    if grid_rows:
        write_rows(out / "grid.csv", grid_rows, GRID_COLUMNS)
        written.append("grid.csv")

    spatial_path = study / "spatial.csv"
    if spatial_path.exists():
        write_rows(out / "spatial.csv", read_rows(spatial_path), SPATIAL_COLUMNS)
        written.append("spatial.csv")

    manifest_path = study / "manifest.json"
    if manifest_path.exists():
        (out / "manifest.json").write_text(manifest_path.read_text())
        written.append("manifest.json")
    return written
