#!/usr/bin/env python3
"""A small end-to-end learning run.

Runs the full episodic loop at a reduced scale (about a minute of CPU) and
prints the per-episode reward, regret against the known-dynamics benchmark,
and the contraction of the model's realized uncertainty.  The desk-scale
configuration used by the acceptance suite is `mfucrl.config.desk_config()`;
it takes around 10-15 minutes per seed.
"""

from mfucrl import config as config_mod
from mfucrl.driver import regret_summary, run_experiment

cfg = config_mod.from_dict({
    "env": {"M": 64, "H": 25, "dt": 1.0 / 25},
    "model": {"subset_cap": 96},
    "planner": {"population": 64, "generations": 15, "hidden_width": 12},
    "loop": {"T": 8, "K": 4},
    "seed": 1,
})

manifest = run_experiment(cfg, out_dir="runs/demo_learning")
print(f"\nknown-dynamics benchmark J* = {manifest.J_star:.2f}\n")
print("  t   J_real   J_pred   regret   sigma_sum")
for r in manifest.records:
    print(f"{r['t']:3d}  {r['J_real']:8.2f} {r['J_predicted']:8.2f} "
          f"{r['regret']:8.2f}  {r['sigma_sum']:9.4f}")

summary = regret_summary(manifest, window=3)
print(f"\ncumulative regret R_T = {summary['R_T']:.2f}")
print(f"first-window mean regret = {summary['first_window_mean']:.2f}, "
      f"last-window = {summary['last_window_mean']:.2f}")
print(f"optimistic episodes: {manifest.optimism_fraction:.0%}")
print("\nrun artifacts in runs/demo_learning/ (episodes.csv, manifest.json, ...)")
