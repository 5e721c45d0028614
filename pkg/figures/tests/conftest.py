import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
FAST_BUNDLE = REPO_ROOT / "artifacts" / "fast_bundle"

# The harness is driven in a subprocess so this package only ever touches
# the bundle files, never the producer's Python API.
MICRO_STUDY = """
import sys
from uqbench import harness
from uqbench.synthdata import generate_splits

out = sys.argv[1]
settings = harness.StudySettings(
    dataset="A", algorithms=("nne", "dpmm"), n_train=(80, 200), seed=1, size="small",
    learning_rate=0.01, max_epochs=4, patience=4, ensemble_size=2, candidates=2,
    mcd_passes=8, gp_optimize=False, gp_mc_samples=50, dpmm_truncation=8, dpmm_chains=1,
    dpmm_burn_in=10, dpmm_samples=10, spatial=True, spatial_points=7, spatial_extent=25.0,
    grid_n_train=(80,), grid_sizes=("small",), grid_weight_decays=(0.01,), grid_members=2,
    out_dir=out + "/study")
bundle = generate_splits(settings.dataset, settings.seed, sizes=(300, 120, 150))
harness.run_study(settings, bundle=bundle)
harness.run_grid(settings, "nne", bundle=bundle)
harness.report(out + "/study", out + "/bundle")
"""


@pytest.fixture(scope="session")
def bundle_dir(tmp_path_factory) -> Path:
    """A completed study bundle: the shared desk-scale one when available,
    otherwise a micro bundle generated through the producer's entry points."""
    if (FAST_BUNDLE / "metrics.csv").exists() and (FAST_BUNDLE / "grid.csv").exists():
        return FAST_BUNDLE
    work = tmp_path_factory.mktemp("micro")
    subprocess.run([sys.executable, "-c", MICRO_STUDY, str(work)], check=True)
    return work / "bundle"
