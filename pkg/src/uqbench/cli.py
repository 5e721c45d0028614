"""Command-line entry points: datagen, train, evaluate, grid, report.

Exit codes: 0 success, 2 missing file, 3 malformed config, 4 checkpoint
fingerprint mismatch, 1 anything else. The output directory of any command
can be overridden with the UQBENCH_OUT environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .classifiers import (
    ConflictualEnsembleClassifier,
    DropoutClassifier,
    EnsembleClassifier,
    EvidentialClassifier,
)
from .dpmm import DPMMClassifier
from .gp import GPClassifier
from .harness import ConfigError, FingerprintMismatch, StudySettings, fingerprint
from .synthdata import Dataset, generate_splits, load_dataset_csv, make_ood_grid, read_manifest
from .synthdata import GammaClassSpec, SplitBundle

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_FILE = 2
EXIT_BAD_CONFIG = 3
EXIT_FINGERPRINT = 4

CHECKPOINT_FORMAT = "uqbench-checkpoint-v1"


def _out_dir(value: str) -> Path:
    return Path(os.environ.get("UQBENCH_OUT", value))


def _load_bundle(data_dir: Path) -> SplitBundle:
    manifest = read_manifest(data_dir / "manifest.json")
    spec = GammaClassSpec.from_dict(manifest["spec"])
    return SplitBundle(
        name=manifest["dataset"],
        spec=spec,
        train=load_dataset_csv(data_dir / "train.csv"),
        validation=load_dataset_csv(data_dir / "validation.csv"),
        test=load_dataset_csv(data_dir / "test.csv"),
        grid=make_ood_grid(),
        manifest=manifest,
    )


def _settings_from_args(args) -> StudySettings:
    if getattr(args, "config", None):
        settings = harness.settings_from_file(args.config)
    else:
        settings = StudySettings.fast() if getattr(args, "fast", False) else StudySettings()
    overrides = {}
    for key in ("dataset", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        settings = StudySettings(**{**settings.to_dict(), **overrides})
    return settings


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _checkpoint_payload(algorithm: str, dataset: str, n_train: int, seed: int,
                        hyperparameters: dict) -> dict:
    return {
        "algorithm": algorithm,
        "dataset": dataset,
        "n_train": n_train,
        "seed": seed,
        "hyperparameters": hyperparameters,
    }


def save_checkpoint(path: Path, clf, dataset: str, n_train: int, seed: int) -> Path:
    payload = _checkpoint_payload(clf.algorithm, dataset, n_train, seed, clf.hyperparameters())
    if clf.algorithm == "gp":
        path = path.with_suffix(".npz")
        clf.save_npz(path)
        meta = dict(payload)
        meta["format"] = CHECKPOINT_FORMAT
        meta["fingerprint"] = fingerprint(payload)
        path.with_suffix(".npz.json").write_text(json.dumps(meta, indent=2))
        return path
    doc = dict(payload)
    doc["format"] = CHECKPOINT_FORMAT
    doc["fingerprint"] = fingerprint(payload)
    doc["model"] = clf.to_dict()
    path = path.with_suffix(".json")
    path.write_text(json.dumps(doc))
    return path


_RESTORERS = {
    "nne": lambda hp: EnsembleClassifier(n_members=hp["n_members"]),
    "cl": lambda hp: ConflictualEnsembleClassifier(beta=hp["beta"], n_members=hp["n_members"]),
    "edl": lambda hp: EvidentialClassifier(lambda0=hp["lambda0"]),
    "mcd": lambda hp: DropoutClassifier(dropout_rate=hp["dropout_rate"], passes=hp["passes"]),
    "dpmm": lambda hp: DPMMClassifier(truncation=hp["truncation"],
                                      concentration=hp["concentration"]),
}


def load_checkpoint(path: Path):
    """Rebuild a fitted predictor; verifies the stored fingerprint."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if path.suffix == ".npz":
        meta_path = path.with_suffix(".npz.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        if meta:
            _verify_fingerprint(meta)
        clf = GPClassifier.load_npz(path)
        return clf, meta
    doc = json.loads(path.read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    _verify_fingerprint(doc)
    algorithm = doc["algorithm"]
    if algorithm not in _RESTORERS:
        raise ConfigError(f"unknown checkpoint algorithm {algorithm!r}")
    clf = _RESTORERS[algorithm](doc["hyperparameters"]).restore(doc["model"])
    return clf, doc


def _verify_fingerprint(doc: dict) -> None:
    payload = _checkpoint_payload(doc["algorithm"], doc["dataset"], doc["n_train"],
                                  doc["seed"], doc["hyperparameters"])
    expected = fingerprint(payload)
    if doc.get("fingerprint") != expected:
        raise FingerprintMismatch(
            f"checkpoint fingerprint {doc.get('fingerprint')} != recomputed {expected}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_datagen(args) -> int:
    out = _out_dir(args.out)
    bundle = generate_splits(args.dataset, args.seed,
                             sizes=(args.train_size, args.val_size, args.test_size))
    harness.export_bundle_csvs(StudySettings(dataset=args.dataset, seed=args.seed),
                               bundle, out)
    print(f"wrote train/validation/test CSVs, ood_grid.csv and manifest.json to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings = _settings_from_args(args)
    data_dir = Path(args.data)
    bundle = _load_bundle(data_dir)
    if bundle.name != settings.dataset:
        settings = StudySettings(**{**settings.to_dict(), "dataset": bundle.name})
    eff_n, capped = harness._effective_n_train(settings, args.algorithm, args.n_train)
    if capped:
        log.warning("capping %s on dataset %s at %d training points",
                    args.algorithm, bundle.name, eff_n)
    train_set = bundle.train.prefix(eff_n)
    seed = harness._run_seed(settings, args.algorithm, args.n_train)
    clf = harness.build_classifier(settings, args.algorithm, eff_n)
    clf.fit(train_set, bundle.validation, seed)
    out = Path(args.out) if args.out else Path(f"{args.algorithm}_{bundle.name}_{args.n_train}")
    if "UQBENCH_OUT" in os.environ:
        out = Path(os.environ["UQBENCH_OUT"]) / out.name
    out.parent.mkdir(parents=True, exist_ok=True)
    written = save_checkpoint(out, clf, bundle.name, args.n_train, seed)
    print(f"checkpoint written to {written}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    clf, meta = load_checkpoint(Path(args.checkpoint))
    bundle = _load_bundle(Path(args.data))
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ident = {
        "dataset": meta.get("dataset", bundle.name),
        "algorithm": meta.get("algorithm", getattr(clf, "algorithm", "unknown")),
        "n_train": meta.get("n_train", -1),
    }

    test_pred = clf.predict(bundle.test.x)
    ood_pred = clf.predict(bundle.grid.x)
    record = dict(ident)
    record.update(harness.evaluate_predictions(test_pred, bundle.test, bundle.spec))
    record["mean_test_uncertainty"] = float(test_pred.uncertainty.mean())
    record.update(harness.ood_summary(ood_pred, bundle.grid))
    record["bayes_accuracy"] = harness.bayes_accuracy(bundle.test, bundle.spec)
    record["status"] = "ok"
    columns = tuple(record.keys())
    harness.write_rows(out / "metrics.csv", [record], columns)

    settings = StudySettings(dataset=bundle.name)
    edges = np.arange(0.0, settings.profile_r_max + settings.profile_bin_width,
                      settings.profile_bin_width)
    profiles = [ident | row
                for row in harness.radial_profile(test_pred, bundle.test.x, edges, bundle.spec)]
    harness.write_rows(out / "profiles.csv", profiles, harness.PROFILE_COLUMNS)

    if args.spatial:
        from .synthdata import lrfd
        axis = np.linspace(-settings.spatial_extent, settings.spatial_extent,
                           settings.spatial_points)
        g1, g2 = np.meshgrid(axis, axis)
        lattice = np.column_stack([g1.ravel(), g2.ravel()])
        sp = clf.predict(lattice)
        nu = lrfd(np.hypot(lattice[:, 0], lattice[:, 1]), bundle.spec)
        rows = [ident | {"x1": float(x1), "x2": float(x2), "mean_prob": float(m),
                         "uncertainty": float(u), "lrfd": float(v),
                         "abs_diff": abs(float(m) - float(v))}
                for (x1, x2), m, u, v in zip(lattice, sp.mean, sp.uncertainty, nu)]
        harness.write_rows(out / "spatial.csv", rows, harness.SPATIAL_COLUMNS)

    print(f"evaluation CSVs written to {out}")
    return EXIT_OK


def cmd_grid(args) -> int:
    settings = _settings_from_args(args)
    out = _out_dir(args.out or settings.out_dir)
    settings = StudySettings(**{**settings.to_dict(), "out_dir": str(out)})
    rows = harness.run_grid(settings, args.algorithm)
    print(f"{len(rows)} grid cells written to {out / f'grid_{args.algorithm}.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args.out)
    written = harness.report(args.study, out)
    print(f"report bundle in {out}: {', '.join(written)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uqbench",
                                     description="calibration / uncertainty benchmark tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate dataset split CSVs and manifest")
    p.add_argument("--dataset", required=True, choices=("A", "B", "C"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data")
    p.add_argument("--train-size", type=int, default=10000)
    p.add_argument("--val-size", type=int, default=5000)
    p.add_argument("--test-size", type=int, default=10000)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="fit and checkpoint one (algorithm, n_train)")
    p.add_argument("--data", required=True, help="directory written by datagen")
    p.add_argument("--algorithm", required=True, choices=harness.ALGORITHMS)
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--fast", action="store_true", help="desk-scale budgets")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="checkpoint path (extension set by algorithm)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metric/profile CSVs from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="eval_out")
    p.add_argument("--spatial", action="store_true", help="also write a 2D lattice CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="hyperparameter grid search for one algorithm")
    p.add_argument("--algorithm", required=True, choices=tuple(harness.GRID_COLUMN_AXES))
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--fast", action="store_true")
    p.add_argument("--dataset", choices=("A", "B", "C"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="merge study outputs into figure-source CSVs")
    p.add_argument("--study", required=True, help="directory with records.csv etc.")
    p.add_argument("--out", default="report_out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("UQBENCH_LOGLEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"error: missing file: {err}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ConfigError as err:
        print(f"error: bad config: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FingerprintMismatch as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FINGERPRINT
    except Exception as err:  # pragma: no cover - safety net
        log.exception("unhandled failure")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
