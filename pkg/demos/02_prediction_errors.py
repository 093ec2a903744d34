"""
From one-step predictions to a naive Bayes verdict
==================================================

Train the stacked LSTM on normal loop-sensor windows only, turn every
test window into a vector of prediction errors, and let Gaussian naive
Bayes separate the two kinds of error vector.
"""

import numpy as np

from lstm_gauss_nbayes import (
    ErrorDataset,
    ExperimentConfig,
    TrainConfig,
    compute_metrics,
    fit_nb,
    prediction_errors_batch,
    stratified_split,
    train_predictor,
)
from lstm_gauss_nbayes.error_bayes import evaluate_nb
from lstm_gauss_nbayes.pipeline import prepare

# windows are downsampled, split 80/10/10 among the normal ones and scaled to [0, 1]
data = prepare(ExperimentConfig(archetype="loop", seed=3))
split = data.split
print(f"train {len(split.normal_train)}, valid {len(split.normal_valid)}, "
      f"normal test {len(split.normal_test)}, abnormal test {len(split.abnormal_test)}")

# a short training run is enough to learn the pre-event rise, valley and surge
params, history = train_predictor(split, TrainConfig(hidden=16, epochs=40, seed=3))
print(f"best validation loss {history.best_valid_loss:.5f} at epoch {history.best_epoch}")

# Only the final step is trained, so earlier predictions are rough for every
# window. Those earlier errors still follow a fixed per-step pattern on normal
# windows, and that pattern is what naive Bayes picks up.
vectors = prediction_errors_batch(params, split.normal_test + split.abnormal_test)
for label, name in ((0, "normal"), (1, "abnormal")):
    errs = np.stack([v.errors for v in vectors if v.label == label])
    print(f"{name:>8} windows: median |final error| {np.median(np.abs(errs[:, -1])):.4f}, "
          f"median per-step spread {np.median(errs.std(axis=0)):.4f}")

# naive Bayes learns one Gaussian per time step and class from 80% of the error vectors
errors = ErrorDataset.from_vectors(vectors)
e_train, e_test = stratified_split(errors, 0.8, seed=4)
model = fit_nb(e_train)
report = compute_metrics(evaluate_nb(model, e_test))
print(f"held-out error vectors: accuracy {report.accuracy:.3f}, precision {report.precision:.3f}, "
      f"recall {report.recall:.3f}, F1 {report.f_beta:.3f}")

# the per-step variances show where in the window the two classes part ways
ratio = model.variance[1] / model.variance[0]
print("steps where abnormal errors vary most:", np.argsort(ratio)[-5:][::-1].tolist())
