"""
Three synthetic sensor archetypes
=================================

Generate each archetype, look at how a normal window differs from an
abnormal one, and measure how strongly each stream depends on its past.
"""

import numpy as np

from lstm_gauss_nbayes import synth_data as sd
from lstm_gauss_nbayes.timeseries_prep import acf

# one generator call per archetype; the default sizes are 500 normal and 60 abnormal windows
for name in ("power", "loop", "land"):
    windows, cfg = sd.generate(name, seed=1)
    normal = [w for w in windows if w.label == 0]
    abnormal = [w for w in windows if w.label == 1]
    print(f"{name}: {len(normal)} normal + {len(abnormal)} abnormal windows of {len(windows[0])} points")

    # mean absolute gap between a window and the average normal window
    reference = np.mean([w.points for w in normal], axis=0)
    gap = lambda ws: np.mean([np.abs(w.points - reference).mean() for w in ws])
    print(f"  mean gap to the average normal window: normal {gap(normal):.3f}, abnormal {gap(abnormal):.3f}")

# dependence on the past: a week back for power, short lags for the other two
power, cfg = sd.generate("power", n_abnormal=0, n_normal=40)
stream = sd.normal_stream(power)
print(f"\npower ACF one week back: {acf(stream, 7 * cfg.points_per_day):.2f}")

for name in ("loop", "land"):
    stream = sd.normal_stream(sd.generate(name)[0])
    print(f"{name} ACF at lags 1, 2, 10: " + ", ".join(f"{acf(stream, k):.2f}" for k in (1, 2, 10)))

# the land archetype with no autoregression is white noise clipped to a band
stream = sd.normal_stream(sd.generate("land", ar_coef=0.0)[0])
print(f"land with ar_coef=0, lag-1 ACF: {acf(stream, 1):+.3f}")
