"""Run the desk-scale study end to end and build the figure-source bundle.

This is the driver behind the acceptance suite: dataset A, all six
algorithms at N_train in {250, 1000, 5000} with reduced budgets, a small
grid-search slice, the 2D lattice evaluation, and the report merge. Takes
on the order of an hour on one laptop core.

Usage: python demos/05_fast_study.py [out_dir]
"""

import sys
import time
from dataclasses import replace

from uqbench import harness
from uqbench.synthdata import generate_splits

out_dir = sys.argv[1] if len(sys.argv) > 1 else "fast_study_out"

settings = harness.StudySettings.fast(
    dataset="A", seed=0, spatial=True, out_dir=out_dir,
    grid_sizes=("small",), grid_n_train=(250,), grid_weight_decays=(0.01,),
)
bundle = generate_splits(settings.dataset, settings.seed)

started = time.time()
records = harness.run_study(settings, bundle=bundle)
print(f"study finished in {time.time() - started:.0f}s; {len(records)} records")
for rec in records:
    print(f"  {rec['algorithm']:5s} N={rec['n_train']:>5d}  acc={rec['accuracy']:.4f} "
          f"W1={rec['wasserstein1']:.4f}  OOD p={rec['ood_mean_prob']:.3f} "
          f"u={rec['ood_mean_uncertainty']:.3f}  [{rec['status']}]")

harness.run_grid(settings, "nne", bundle=bundle)
written = harness.report(out_dir, f"{out_dir}/report")
print(f"report bundle: {', '.join(written)} in {out_dir}/report")
