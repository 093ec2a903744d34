"""Anomaly detection for sensor time series.

A stacked LSTM learns one-step-ahead prediction on normal windows; the
vector of its prediction errors on a window is then classified by a
Gaussian naive Bayes model. Supervised LSTM and MLP classifiers are
included as baselines, along with seeded synthetic data generators and an
experiment pipeline.
"""

from .error_bayes import ErrorDataset, GaussNBModel, classify, fit_nb, posterior_abnormal, stratified_split
from .errors import DetectorError, StageError
from .lstm import StackedLstmParams, forward, prediction_errors, prediction_errors_batch, train_predictor
from .metrics import ConfusionCounts, MetricReport, compute_metrics, confusion, f_beta_score
from .neural_core import TrainConfig, TrainingHistory
from .persistence import load_model, save_model
from .pipeline import ExperimentConfig, ExperimentReport, emit_report, run_experiment
from .timeseries_prep import (
    DatasetSplit,
    TimeSeries,
    Window,
    acf,
    downsample,
    make_windows,
    minmax_normalize,
    split_dataset,
)

__version__ = "0.1.0"
