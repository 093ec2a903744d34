"""
Comparing the detector with two neural baselines
================================================

Run the whole experiment on one archetype: the LSTM plus naive Bayes
detector, an LSTM sequence classifier and a 10-20-10 MLP, all scored on
the same held-out windows. Artifacts land in a temporary directory.
"""

import sys
import tempfile
from pathlib import Path

from lstm_gauss_nbayes import ExperimentConfig, run_experiment
from lstm_gauss_nbayes.pipeline import format_table, save_artifacts

archetype = sys.argv[1] if len(sys.argv) > 1 else "land"

# 40 epochs with 16 units per layer keeps one run to several seconds
config = ExperimentConfig(archetype=archetype, seed=0, epochs=40, hidden=16)
report = run_experiment(config)
print(format_table(report))

# the three methods share one test set
for method, counts in report.counts.items():
    print(f"{method:<20} tp={counts.tp:<3} fp={counts.fp:<3} tn={counts.tn:<3} fn={counts.fn}")

print("\nseconds per stage:", {k: round(v, 2) for k, v in report.runtimes.items()})

out = Path(tempfile.mkdtemp(prefix="lgnb_demo_"))
for path in save_artifacts(report, out):
    print("wrote", path)
