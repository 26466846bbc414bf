"""Simulate a small telemetry corpus and look at what comes out.

Each trial is one run of the six-service shop (frontend, auth, catalog,
cart, order, payment) with background traffic plus one attack scenario
injected into the middle half of the run. A trial directory holds four
JSONL files: traces, logs, metrics, and the labeled attack windows.
"""

import json
import tempfile
from pathlib import Path

from microids import simulate
from microids.telemetry import read_trial

out_dir = Path(tempfile.mkdtemp(prefix="microids_demo_"))

# Ten trials, two per attack scenario, 60 seconds each.
plan = simulate.default_trial_plan(n_trials=10, seed=7, duration_s=60)
rows = simulate.simulate_corpus(plan, out_dir)

print(f"wrote {len(rows)} trials under {out_dir}\n")
for run_id, scenario, trial_dir in rows[:5]:
    print(f"  {run_id:28s} scenario={scenario}")

# Open one bruteforce trial and inspect the pieces.
run_id, scenario, trial_dir = next(r for r in rows if r[1] == "bruteforce_login")
traces, logs, metrics, windows = read_trial(trial_dir)
print(f"\n{run_id}: {len(traces)} traces, {len(logs)} logs, "
      f"{len(metrics)} metric samples, {len(windows)} label windows")

window = next(w for w in windows if w.class_label != "normal")
print(f"attack window: [{window.start_us}, {window.end_us}) labeled {window.class_label}")

# Attack traces carry suspicious log lines on the auth service.
suspicious = [l for l in logs if "failed" in l.message][:3]
for log in suspicious:
    print(f"  auth log: {log.message!r}")

# Metrics tick every 5 seconds per service; the auth error rate spikes
# inside the window and decays back afterwards.
auth = [m for m in metrics if m.service == "auth"]
error_rate = [round(m.values[5], 3) for m in auth]
print(f"\nauth error_rate over the run:\n  {error_rate}")

print(f"\nrun_specs.csv:\n{(out_dir / 'run_specs.csv').read_text().splitlines()[0]}")
print(json.dumps(rows[0], indent=None))
