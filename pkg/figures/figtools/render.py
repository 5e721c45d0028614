"""The five figure families rendered from a study bundle.

families:
  profiles — estimates and uncertainties vs radius with the exact oracle
             curve overlaid (solid black),
  metrics  — the six summary scores vs training-set size per algorithm,
  ood      — out-of-distribution averages vs training-set size with the
             flat-prior one-observation std as a dashed reference,
  grid     — hyperparameter-search bar panels with percentile whiskers,
  spatial  — 2D heatmaps of estimates, oracle deviation and uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd

from .references import flat_prior_one_observation_std, load_manifest, oracle_curve
from .schema import BUNDLE_FILES, SchemaError, load_family_csv

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURE_FAMILIES = tuple(BUNDLE_FILES)

#: One fixed color per algorithm, in the study's presentation order.
ALGO_COLORS = {
    "nne": "tab:blue",
    "cl": "tab:orange",
    "edl": "tab:green",
    "mcd": "tab:red",
    "gp": "tab:purple",
    "dpmm": "tab:brown",
}

SIZE_COLORS = {"small": "tab:cyan", "medium": "tab:olive", "large": "tab:pink"}

METRIC_PANELS = (
    ("accuracy", "ACC"),
    ("ece", "ECE"),
    ("log_loss", "LogLoss"),
    ("z_score", "Z"),
    ("wasserstein1", "WD"),
    ("mean_kl", "KL-div"),
)


class NoDataError(ValueError):
    """A filter selection left nothing to plot."""


@dataclass
class FigureSpec:
    family: str
    input_csv: Path
    manifest: Path
    output: Path
    datasets: tuple[str, ...] = ()
    algorithms: tuple[str, ...] = ()
    n_train: tuple[int, ...] = ()

    def __post_init__(self):
        if self.family not in FIGURE_FAMILIES:
            raise ValueError(f"unknown figure family {self.family!r}; "
                             f"choose from {FIGURE_FAMILIES}")
        self.input_csv = Path(self.input_csv)
        self.manifest = Path(self.manifest)
        self.output = Path(self.output)


def _apply_filters(frame: pd.DataFrame, spec: FigureSpec) -> pd.DataFrame:
    if spec.datasets:
        frame = frame[frame["dataset"].isin(spec.datasets)]
    if spec.algorithms:
        frame = frame[frame["algorithm"].isin(spec.algorithms)]
    if spec.n_train:
        frame = frame[frame["n_train"].astype(int).isin([int(n) for n in spec.n_train])]
    if frame.empty:
        raise NoDataError(
            f"filter selection (datasets={spec.datasets}, algorithms={spec.algorithms}, "
            f"n_train={spec.n_train}) matches no rows of {spec.input_csv}")
    return frame.copy()


def render(spec: FigureSpec) -> Path:
    """Render one figure family to ``spec.output`` and return the path."""
    frame = _apply_filters(load_family_csv(spec.input_csv, spec.family), spec)
    manifest = load_manifest(spec.manifest)
    renderer = _RENDERERS[spec.family]
    fig = renderer(frame, manifest)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return spec.output


def _algorithms_in(frame: pd.DataFrame) -> list[str]:
    present = list(dict.fromkeys(frame["algorithm"]))
    ordered = [a for a in ALGO_COLORS if a in present]
    return ordered + [a for a in present if a not in ordered]


def _render_profiles(frame: pd.DataFrame, manifest: dict):
    algorithms = _algorithms_in(frame)
    sizes = sorted(frame["n_train"].astype(int).unique())
    nrows = 2 * len(sizes)
    fig, axes = plt.subplots(nrows, len(algorithms),
                             figsize=(2.6 * len(algorithms), 2.2 * nrows),
                             sharex=True, squeeze=False)
    r_max = float(frame["r_center"].max())
    r_ref = np.linspace(1e-6, r_max, 300)
    nu_ref = oracle_curve(manifest, r_ref)
    for si, n in enumerate(sizes):
        for ai, algo in enumerate(algorithms):
            rows = frame[(frame["algorithm"] == algo) & (frame["n_train"].astype(int) == n)]
            ax_p = axes[2 * si][ai]
            ax_u = axes[2 * si + 1][ai]
            if rows.empty:
                ax_p.set_axis_off()
                ax_u.set_axis_off()
                continue
            r = rows["r_center"].to_numpy()
            color = ALGO_COLORS.get(algo, "gray")
            ax_p.errorbar(r, rows["mean_prob"].to_numpy(),
                          yerr=np.vstack([
                              (rows["mean_prob"] - rows["min_prob"]).to_numpy(),
                              (rows["max_prob"] - rows["mean_prob"]).to_numpy()]).tolist(),
                          fmt="o", ms=2.5, lw=0.8, color=color)
            ax_p.plot(r_ref, nu_ref, color="black", lw=1.0)
            ax_p.set_ylim(-0.05, 1.05)
            ax_p.set_title(f"{algo.upper()}  N={n}", fontsize=9)
            ax_u.errorbar(r, rows["mean_uncertainty"].to_numpy(),
                          yerr=np.vstack([
                              (rows["mean_uncertainty"] - rows["min_uncertainty"]).to_numpy(),
                              (rows["max_uncertainty"] - rows["mean_uncertainty"]).to_numpy()]).tolist(),
                          fmt="o", ms=2.5, lw=0.8, color=color)
            ax_u.set_ylim(-0.02, 0.55)
            if ai == 0:
                ax_p.set_ylabel("class-2 prob")
                ax_u.set_ylabel("uncertainty")
            ax_u.set_xlabel("radius")
    fig.suptitle(f"dataset {manifest.get('dataset', '?')}: estimates vs radius "
                 "(black line: exact oracle)", fontsize=10)
    return fig


def _render_metrics(frame: pd.DataFrame, manifest: dict):
    algorithms = _algorithms_in(frame)
    fig, axes = plt.subplots(2, 3, figsize=(11, 6), sharex=True)
    for ax, (column, label) in zip(axes.ravel(), METRIC_PANELS):
        for algo in algorithms:
            rows = frame[frame["algorithm"] == algo].sort_values("n_train")
            ax.plot(rows["n_train"], rows[column], marker="o", ms=3,
                    color=ALGO_COLORS.get(algo, "gray"), label=algo.upper())
        if column == "accuracy":
            ref = frame["bayes_accuracy"].astype(float).iloc[0]
            ax.axhline(ref, color="black", ls="--", lw=1.0, label="optimal")
        ax.set_title(label, fontsize=10)
        ax.set_xscale("log")
    axes[1][0].set_xlabel("training points")
    axes[0][0].legend(fontsize=7)
    fig.suptitle(f"dataset {manifest.get('dataset', '?')}: test-set scores vs data size",
                 fontsize=10)
    fig.tight_layout()
    return fig


def _render_ood(frame: pd.DataFrame, manifest: dict):
    algorithms = _algorithms_in(frame)
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2), sharex=True)
    panels = (
        ("ood_mean_prob", ("ood_prob_angle_min", "ood_prob_angle_max"), "OOD probability"),
        ("ood_mean_uncertainty", ("ood_unc_angle_min", "ood_unc_angle_max"), "OOD uncertainty"),
        ("mean_test_uncertainty", None, "test-set uncertainty"),
    )
    for ax, (column, spread, label) in zip(axes, panels):
        for algo in algorithms:
            rows = frame[frame["algorithm"] == algo].sort_values("n_train")
            if spread is not None:
                yerr = np.maximum(np.vstack([
                    (rows[column] - rows[spread[0]]).to_numpy(),
                    (rows[spread[1]] - rows[column]).to_numpy()]), 0.0).tolist()
                ax.errorbar(rows["n_train"].to_numpy(), rows[column].to_numpy(), yerr=yerr,
                            marker="o", ms=3, lw=1.0,
                            color=ALGO_COLORS.get(algo, "gray"), label=algo.upper())
            else:
                ax.plot(rows["n_train"], rows[column], marker="o", ms=3,
                        color=ALGO_COLORS.get(algo, "gray"), label=algo.upper())
        ax.set_title(label, fontsize=10)
        ax.set_xscale("log")
        ax.set_xlabel("training points")
    axes[1].axhline(flat_prior_one_observation_std(manifest), color="black",
                    ls="--", lw=1.0, label="1-obs flat prior")
    axes[0].legend(fontsize=7)
    fig.suptitle(f"dataset {manifest.get('dataset', '?')}: out-of-distribution summary",
                 fontsize=10)
    fig.tight_layout()
    return fig


def _render_grid(frame: pd.DataFrame, manifest: dict):
    algorithms = _algorithms_in(frame)
    if len(algorithms) != 1:
        # One sweep per figure keeps the column axis meaningful.
        frame = frame[frame["algorithm"] == algorithms[0]].copy()
    algo = algorithms[0]
    param = frame["column_param"].iloc[0]
    values = sorted(frame["column_value"].unique())
    panels = (
        ("val_accuracy", None, "validation accuracy"),
        ("val_wasserstein1", None, "validation WD"),
        ("ood_mean_prob", ("ood_prob_p2_5", "ood_prob_p97_5"), "OOD probability"),
        ("ood_mean_uncertainty", ("ood_unc_p2_5", "ood_unc_p97_5"), "OOD uncertainty"),
    )
    fig, axes = plt.subplots(len(panels), len(values),
                             figsize=(3.4 * len(values), 2.3 * len(panels)),
                             sharex=True, squeeze=False)
    sizes = list(dict.fromkeys(frame["size"]))
    n_values = sorted(frame["n_train"].astype(int).unique())
    x = np.arange(len(n_values), dtype=float)
    width = 0.8 / max(len(sizes), 1)
    for ci, value in enumerate(values):
        sel = frame[frame["column_value"] == value]
        for ri, (column, spread, label) in enumerate(panels):
            ax = axes[ri][ci]
            for si, size in enumerate(sizes):
                rows = sel[sel["size"] == size].sort_values("n_train")
                pos = [n_values.index(int(n)) for n in rows["n_train"]]
                offs = x[pos] + (si - (len(sizes) - 1) / 2) * width
                yerr = None
                if spread is not None:
                    yerr = np.maximum(np.vstack([
                        (rows[column] - rows[spread[0]]).to_numpy(),
                        (rows[spread[1]] - rows[column]).to_numpy(),
                    ]), 0.0).tolist()
                ax.bar(offs, rows[column].to_numpy(), width=width, yerr=yerr, capsize=2,
                       color=SIZE_COLORS.get(size, "gray"), label=size if ri == 0 else None)
            if ri == 0:
                ax.set_title(f"{param} = {value}", fontsize=9)
            if ci == 0:
                ax.set_ylabel(label, fontsize=8)
            ax.set_xticks(x)
            ax.set_xticklabels([str(n) for n in n_values], fontsize=7)
    axes[0][0].legend(fontsize=7)
    fig.suptitle(f"{algo.upper()} hyperparameter sweep "
                 f"(dataset {manifest.get('dataset', '?')}); whiskers: 2.5-97.5 pct",
                 fontsize=10)
    fig.tight_layout()
    return fig


def _render_spatial(frame: pd.DataFrame, manifest: dict):
    algorithms = _algorithms_in(frame)
    n = int(frame["n_train"].astype(int).max())
    frame = frame[frame["n_train"].astype(int) == n]
    panels = (("mean_prob", "estimate", 0.0, 1.0),
              ("abs_diff", "|estimate - oracle|", 0.0, 1.0),
              ("uncertainty", "uncertainty", 0.0, 0.5))
    fig, axes = plt.subplots(len(panels), len(algorithms),
                             figsize=(2.6 * len(algorithms), 2.4 * len(panels)),
                             squeeze=False)
    for ai, algo in enumerate(algorithms):
        rows = frame[frame["algorithm"] == algo]
        if rows.empty:
            for ri in range(len(panels)):
                axes[ri][ai].set_axis_off()
            continue
        pivots = {c: rows.pivot_table(index="x2", columns="x1", values=c)
                  for c, *_ in panels}
        extent = [rows["x1"].min(), rows["x1"].max(), rows["x2"].min(), rows["x2"].max()]
        for ri, (column, label, vmin, vmax) in enumerate(panels):
            ax = axes[ri][ai]
            im = ax.imshow(pivots[column].to_numpy(), origin="lower", extent=extent,
                           vmin=vmin, vmax=vmax, cmap="viridis")
            if ri == 0:
                ax.set_title(algo.upper(), fontsize=9)
            if ai == 0:
                ax.set_ylabel(label, fontsize=8)
            if ai == len(algorithms) - 1:
                fig.colorbar(im, ax=ax, shrink=0.8)
    fig.suptitle(f"dataset {manifest.get('dataset', '?')}: spatial maps at N={n}",
                 fontsize=10)
    fig.tight_layout()
    return fig


_RENDERERS = {
    "profiles": _render_profiles,
    "metrics": _render_metrics,
    "ood": _render_ood,
    "grid": _render_grid,
    "spatial": _render_spatial,
}
