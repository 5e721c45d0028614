import json
import math

import numpy as np
import pandas as pd
import pytest

from figtools import FigureSpec, NoDataError, SchemaError, render
from figtools.cli import main
from figtools.references import flat_prior_one_observation_std, load_manifest, oracle_curve
from figtools.schema import BUNDLE_FILES


def spec_for(bundle_dir, family, out, **filters):
    return FigureSpec(
        family=family,
        input_csv=bundle_dir / BUNDLE_FILES[family],
        manifest=bundle_dir / "manifest.json",
        output=out,
        **filters,
    )


@pytest.mark.parametrize("family", ["profiles", "metrics", "ood", "grid", "spatial"])
def test_each_family_renders(bundle_dir, tmp_path, family):
    out = tmp_path / f"{family}.png"
    rendered = render(spec_for(bundle_dir, family, out))
    assert rendered == out
    assert out.stat().st_size > 1000


def test_rendering_is_idempotent_and_read_only(bundle_dir, tmp_path):
    csv_path = bundle_dir / "metrics.csv"
    before = csv_path.read_bytes()
    out1 = tmp_path / "a.png"
    out2 = tmp_path / "b.png"
    render(spec_for(bundle_dir, "metrics", out1))
    render(spec_for(bundle_dir, "metrics", out2))
    assert csv_path.read_bytes() == before
    assert out1.read_bytes() == out2.read_bytes()


def test_empty_filter_selection_is_an_error(bundle_dir, tmp_path):
    out = tmp_path / "never.png"
    with pytest.raises(NoDataError):
        render(spec_for(bundle_dir, "metrics", out, algorithms=("nonexistent",)))
    assert not out.exists()


def test_missing_column_named_in_error(bundle_dir, tmp_path):
    frame = pd.read_csv(bundle_dir / "ood.csv").drop(columns=["ood_mean_uncertainty"])
    broken = tmp_path / "ood.csv"
    frame.to_csv(broken, index=False)
    spec = FigureSpec(family="ood", input_csv=broken,
                      manifest=bundle_dir / "manifest.json", output=tmp_path / "x.png")
    with pytest.raises(SchemaError, match="ood_mean_uncertainty"):
        render(spec)


def test_oracle_curve_matches_bundle_reference_column(bundle_dir):
    # The profiles CSV carries the producer's oracle values; the locally
    # recomputed curve from the manifest parameters must agree.
    manifest = load_manifest(bundle_dir / "manifest.json")
    profiles = pd.read_csv(bundle_dir / "profiles.csv")
    ours = oracle_curve(manifest, profiles["r_center"].to_numpy())
    assert np.allclose(ours, profiles["lrfd_center"].to_numpy(), atol=1e-9)


def test_flat_prior_reference_value(bundle_dir):
    manifest = load_manifest(bundle_dir / "manifest.json")
    assert flat_prior_one_observation_std(manifest) == pytest.approx(1.0 / math.sqrt(18.0))


def test_identical_class_profile_reference_is_flat(tmp_path, bundle_dir):
    # A generator with identical class densities yields a flat 0.5 curve.
    manifest = load_manifest(bundle_dir / "manifest.json")
    manifest["spec"] = {"alpha1": 6.0, "eta1": 3.0, "alpha2": 6.0, "eta2": 3.0,
                        "prior1": 0.5, "prior2": 0.5}
    curve = oracle_curve(manifest, np.linspace(0.5, 60, 50))
    assert np.allclose(curve, 0.5, atol=1e-12)


class TestCLI:
    def test_render_all(self, bundle_dir, tmp_path):
        out_dir = tmp_path / "figs"
        assert main(["--bundle", str(bundle_dir), "--all", "--out-dir", str(out_dir)]) == 0
        for family in BUNDLE_FILES:
            if (bundle_dir / BUNDLE_FILES[family]).exists():
                assert (out_dir / f"{family}.png").exists()

    def test_single_family_with_filters(self, bundle_dir, tmp_path):
        out = tmp_path / "ood.png"
        assert main(["--bundle", str(bundle_dir), "--family", "ood",
                     "--out", str(out), "--algorithm", "nne"]) == 0
        assert out.exists()

    def test_missing_bundle_exit_code(self, tmp_path):
        assert main(["--bundle", str(tmp_path / "none"), "--family", "ood",
                     "--out", str(tmp_path / "x.png")]) == 2

    def test_empty_selection_exit_code(self, bundle_dir, tmp_path):
        assert main(["--bundle", str(bundle_dir), "--family", "metrics",
                     "--out", str(tmp_path / "x.png"), "--dataset", "Z"]) == 3
