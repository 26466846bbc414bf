"""Run the experiment grid: modality ablation plus baseline comparison.

The grid trains the GCN on four feature sets (trace structure only, logs
only, metrics only, logs+metrics) under the trial-level split, and compares
against a random forest and an MLP on flattened per-service features under
both split protocols. Report files (JSON, CSVs, SVG charts, t-SNE
coordinates) land in a temp directory, the same set the `microids ablate`
command writes.
"""

import tempfile
import warnings
from pathlib import Path

from microids import evaluation, graphs, simulate

out_dir = Path(tempfile.mkdtemp(prefix="microids_demo_"))
plan = simulate.default_trial_plan(n_trials=15, seed=7, duration_s=60)
rows = simulate.simulate_corpus(plan, out_dir / "corpus")
skeletons = graphs.load_skeletons(rows)

# A few epochs is enough to see the modality ordering; the full budget
# (100 epochs) is what closes the gap to the forest.
config = evaluation.ExperimentConfig(epochs=5, seed=7)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    output = evaluation.run_experiment_matrix(skeletons, config)

print(f"{'cell':52s} {'acc':>6s} {'mF1':>6s} {'train_s':>8s}")
for report in output.reports:
    print(f"{report.cell_name:52s} {report.accuracy:6.3f} "
          f"{report.macro_f1:6.3f} {report.train_seconds:8.2f}")
if output.failures:
    print("failures:", output.failures)

ablation = {r.modality: r for r in output.reports
            if r.model == "gcn" and r.split == "trial_level"}
print("\nmodality ablation (trial-level GCN, macro F1):")
for modality in ("trace_only", "logs_only", "metrics_only", "logs_plus_metrics"):
    print(f"  {modality:20s} {ablation[modality].macro_f1:.3f}")
print("structure alone identifies floods (star-shaped bursts) but cannot")
print("separate probe scenarios; log text and metrics carry that signal.")

written = evaluation.emit_report(output, out_dir / "report")
print(f"\nwrote {len(written)} report files under {out_dir / 'report'}:")
for path in written[:8]:
    print(f"  {path.name}")
print("  ...")
