"""End-to-end experiment: data -> predictor -> error vectors -> naive Bayes, plus baselines."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import synth_data
from .baselines import classify_windows, lstm_classifier_loss, mlp_loss, train_lstm_classifier, train_mlp
from .error_bayes import ErrorDataset, evaluate_nb, fit_nb, stratified_split
from .errors import ConfigError, DetectorError, InvalidFolds, IoError, StageError
from .lstm import _as_matrix, prediction_errors_batch, predictor_loss, train_predictor
from .metrics import ConfusionCounts, MetricReport, compute_metrics, confusion
from .neural_core import TrainConfig, TrainingHistory
from .persistence import save_model
from .timeseries_prep import (
    ABNORMAL,
    NORMAL,
    DatasetSplit,
    TimeSeries,
    downsample,
    label_windows,
    make_windows,
    normalize_split,
    read_labels_csv,
    read_series_csv,
    split_dataset,
)

log = logging.getLogger(__name__)

METHODS = ("LSTM-Gauss-NBayes", "LSTM NN", "MLP")
OUT_DIR_ENV = "LGNB_OUT_DIR"

# raw windows per archetype are downsampled by these factors by default
DEFAULT_DOWNSAMPLE = {"power": 8, "loop": 1, "land": 1}


@dataclass
class ExperimentConfig:
    # data source: a generator archetype, or series_csv (+ labels_csv)
    archetype: Optional[str] = "power"
    series_csv: Optional[str] = None
    labels_csv: Optional[str] = None
    n_normal: int = 500
    n_abnormal: int = 60
    noise_sigma: Optional[float] = None
    generator: dict = field(default_factory=dict)  # extra archetype config fields
    # preprocessing
    downsample: Optional[int] = None
    window_len: Optional[int] = None
    stride: Optional[int] = None
    split_ratios: tuple = (0.8, 0.1, 0.1)
    # predictor
    hidden: int = 32
    lr: float = 0.05
    epochs: int = 1000
    dropout: float = 0.1
    input_dropout: float = 0.0
    l2: float = 1e-4
    batch_size: int = 32
    patience: Optional[int] = 50
    # baselines (None -> same as predictor)
    baseline_hidden: Optional[int] = None
    baseline_lr: Optional[float] = None
    baseline_epochs: Optional[int] = None
    mlp_lr: Optional[float] = None
    # naive Bayes
    nb_train_fraction: float = 0.8
    variance_floor: float = 1e-9
    # cross-validation: {"hidden": [16, 32, 64]}; empty -> fixed hyperparameters
    cv_grid: dict = field(default_factory=dict)
    cv_folds: int = 5
    cv_epochs: int = 200
    seed: int = 7
    out_dir: Optional[str] = None

    def validate(self):
        if self.series_csv is None and self.archetype not in synth_data.GENERATORS:
            raise ConfigError(f"need series_csv or an archetype in {sorted(synth_data.GENERATORS)}")
        for p in (self.series_csv, self.labels_csv):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"no such file: {p}")
        if self.series_csv is not None and self.labels_csv is None:
            raise ConfigError("labels_csv is required with series_csv")
        if self.series_csv is not None and self.window_len is None:
            raise ConfigError("window_len is required with series_csv")
        if len(self.split_ratios) != 3 or not math.isclose(sum(self.split_ratios), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split_ratios must be 3 numbers summing to 1, got {self.split_ratios}")
        tunable = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed", "epochs"}
        for key, values in self.cv_grid.items():
            if key not in tunable:
                raise ConfigError(f"cv_grid key {key!r} is not a training hyperparameter")
            if not values:
                raise ConfigError(f"cv_grid[{key!r}] is empty")
        return self

    def predictor_config(self, seed_offset=0) -> TrainConfig:
        return TrainConfig(hidden=self.hidden, lr=self.lr, epochs=self.epochs, dropout=self.dropout,
                           input_dropout=self.input_dropout, l2=self.l2, seed=self.seed + seed_offset,
                           batch_size=self.batch_size, patience=self.patience)

    def baseline_config(self, seed_offset, mlp=False) -> TrainConfig:
        cfg = self.predictor_config(seed_offset)
        if self.baseline_hidden is not None:
            cfg.hidden = self.baseline_hidden
        if self.baseline_lr is not None:
            cfg.lr = self.baseline_lr
        if mlp and self.mlp_lr is not None:
            cfg.lr = self.mlp_lr
        if self.baseline_epochs is not None:
            cfg.epochs = self.baseline_epochs
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a flat mapping; unknown keys are rejected."""
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    data = dict(data)
    if "split_ratios" in data:
        data["split_ratios"] = tuple(data["split_ratios"])
    return ExperimentConfig(**data)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a flat JSON object")
    return config_from_dict(data)


class _stage:
    """Context manager tagging any package error with the stage name."""

    def __init__(self, name, timings):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and isinstance(exc, (DetectorError, ValueError, ArithmeticError)) \
                and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------- data preparation

@dataclass
class PreparedData:
    split: DatasetSplit          # normalized
    norm: object                 # NormalizationParams
    window_len: int
    sample_interval: float


def load_labelled_windows(cfg: ExperimentConfig):
    """Ingest (or generate) the stream, downsample, window and label it."""
    if cfg.series_csv is not None:
        series = read_series_csv(cfg.series_csv)
        labels = read_labels_csv(cfg.labels_csv)
        factor = cfg.downsample or 1
        window_len = cfg.window_len
    else:
        overrides = {"n_normal": cfg.n_normal, "n_abnormal": cfg.n_abnormal, "seed": cfg.seed}
        if cfg.noise_sigma is not None:
            overrides["noise_sigma"] = cfg.noise_sigma
        overrides.update(cfg.generator)
        windows, gcfg = synth_data.generate(cfg.archetype, **overrides)
        series, label_list = synth_data.to_stream(windows, gcfg.sample_interval, cfg.archetype)
        labels = dict(enumerate(label_list))
        factor = cfg.downsample or DEFAULT_DOWNSAMPLE[cfg.archetype]
        raw_len = len(windows[0])
        if raw_len % factor:
            raise ConfigError(f"downsample factor {factor} does not divide window length {raw_len}")
        window_len = cfg.window_len or raw_len // factor
    if factor > 1:
        series = downsample(series, factor)
    stride = cfg.stride or window_len
    windows = make_windows(series, window_len, stride)
    return label_windows(windows, labels), series.sample_interval


def prepare(cfg: ExperimentConfig) -> PreparedData:
    windows, interval = load_labelled_windows(cfg)
    normal = [w for w in windows if w.label == NORMAL]
    abnormal = [w for w in windows if w.label == ABNORMAL]
    split = split_dataset(normal, abnormal, cfg.split_ratios, cfg.seed)
    scaled, norm = normalize_split(split)
    return PreparedData(scaled, norm, len(windows[0]), interval)


# ---------------------------------------------------------------- cross-validation

@dataclass
class CVResult:
    best: dict
    candidates: list  # (overrides, fold scores, mean score) in grid order


def expand_grid(grid) -> list:
    if isinstance(grid, list):
        return [dict(g) for g in grid]
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def kfold_indices(n: int, folds: int, seed: int, labels=None) -> list:
    """Seeded fold assignment; stratified by class when ``labels`` is given."""
    if folds < 2 or n < folds:
        raise InvalidFolds(f"cannot split {n} samples into {folds} folds of >= 1 sample")
    rng = np.random.default_rng(seed)
    if labels is None:
        return [np.sort(part) for part in np.array_split(rng.permutation(n), folds)]
    labels = np.asarray(labels)
    parts = [[] for _ in range(folds)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        for k, chunk in enumerate(np.array_split(idx[rng.permutation(idx.size)], folds)):
            parts[k].extend(chunk.tolist())
    if any(len(p) == 0 for p in parts):
        raise InvalidFolds(f"a fold is empty with {n} samples and {folds} folds")
    return [np.sort(np.array(p, dtype=int)) for p in parts]


def crossval_select(windows, kind: str, grid, base: TrainConfig, folds: int = 5,
                    cv_epochs: int = 200, seed: int = 0) -> CVResult:
    """K-fold selection over a hyperparameter grid on training windows only.

    The predictor is scored by held-out final-step squared error, the
    classifiers by held-out cross-entropy. Lowest mean wins; ties keep the
    earlier grid entry. Diverging candidates score +inf.
    """
    candidates = expand_grid(grid)
    if not candidates:
        raise ConfigError("empty hyperparameter grid")
    labels = None if kind == "predictor" else [w.label for w in windows]
    parts = kfold_indices(len(windows), folds, seed, labels)
    results = []
    for overrides in candidates:
        cfg = dataclasses.replace(base, epochs=cv_epochs, **overrides)
        scores = []
        for k, held in enumerate(parts):
            held_set = set(held.tolist())
            tr = [w for i, w in enumerate(windows) if i not in held_set]
            va = [windows[i] for i in held]
            scores.append(_cv_fold_score(kind, tr, va, dataclasses.replace(cfg, seed=cfg.seed + k)))
        mean = math.fsum(sorted(scores)) / len(scores)
        results.append((overrides, scores, mean))
    best = min(range(len(results)), key=lambda i: (results[i][2], i))
    return CVResult(results[best][0], results)


def _cv_fold_score(kind, train, valid, cfg) -> float:
    try:
        if kind == "predictor":
            params, _ = train_predictor((train, valid), cfg)
            score = predictor_loss(params, valid)
        elif kind == "lstm_nn":
            params, _ = train_lstm_classifier(train, valid, cfg)
            score = lstm_classifier_loss(params, _as_matrix(valid), np.array([w.label for w in valid], float))
        elif kind == "mlp":
            params, _ = train_mlp(train, valid, cfg)
            score = mlp_loss(params, _as_matrix(valid), np.array([w.label for w in valid], float))
        else:
            raise ConfigError(f"unknown model kind {kind!r}")
    except (ArithmeticError, FloatingPointError) as exc:
        log.info("cv candidate diverged: %s", exc)
        return math.inf
    return score if math.isfinite(score) else math.inf


# ---------------------------------------------------------------- experiment

@dataclass
class ExperimentReport:
    metrics: dict                         # method -> MetricReport
    counts: dict                          # method -> ConfusionCounts
    histories: dict                       # model name -> TrainingHistory
    config: dict
    seeds: dict
    runtimes: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    cv: dict = field(default_factory=dict)
    normalization: tuple = ()

    def f1(self, method):
        return self.metrics[method].f_beta


def _select(cfg: ExperimentConfig, kind, windows, base: TrainConfig, cv_results: dict) -> TrainConfig:
    if not cfg.cv_grid:
        return base
    res = crossval_select(windows, kind, cfg.cv_grid, base, cfg.cv_folds, cfg.cv_epochs, base.seed)
    cv_results[kind] = res
    return dataclasses.replace(base, **res.best)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    cfg.validate()
    timings, cv_results = {}, {}
    seeds = {"split": cfg.seed, "error_split": cfg.seed + 1, "predictor": cfg.seed + 2,
             "lstm_nn": cfg.seed + 3, "mlp": cfg.seed + 4}

    with _stage("preprocess", timings):
        data = prepare(cfg)
    split = data.split

    with _stage("predictor_training", timings):
        pcfg = _select(cfg, "predictor", split.normal_train, cfg.predictor_config(2), cv_results)
        predictor, p_hist = train_predictor(split, pcfg)

    with _stage("error_extraction", timings):
        vectors = prediction_errors_batch(predictor, split.normal_test + split.abnormal_test)
        errors = ErrorDataset.from_vectors(vectors, "E")
        e_train, e_test = stratified_split(errors, cfg.nb_train_fraction, seeds["error_split"])

    with _stage("nb_fit", timings):
        nb = fit_nb(e_train, cfg.variance_floor)

    with _stage("nb_evaluate", timings):
        counts = {METHODS[0]: evaluate_nb(nb, e_test)}

    by_id = {w.source_offset: w for w in split.normal_test + split.abnormal_test}
    test_windows = [by_id[i] for i in e_test.window_ids]
    abn_train_ids = [i for i, y in zip(e_train.window_ids, e_train.y) if y == ABNORMAL]
    rng = np.random.default_rng(seeds["error_split"])
    abn_train_ids = [abn_train_ids[k] for k in rng.permutation(len(abn_train_ids))]
    n_abn_valid = max(1, len(abn_train_ids) // 8)
    abn_valid = [by_id[i] for i in abn_train_ids[:n_abn_valid]]
    abn_train = [by_id[i] for i in abn_train_ids[n_abn_valid:]]
    base_train = split.normal_train + abn_train
    base_valid = split.normal_valid + abn_valid
    truth = [w.label for w in test_windows]

    histories = {"lstm_predictor": p_hist}
    models = {"predictor": predictor, "gauss_nb": nb}
    with _stage("baseline_training", timings):
        lcfg = _select(cfg, "lstm_nn", base_train, cfg.baseline_config(3), cv_results)
        lstm_nn, l_hist = train_lstm_classifier(base_train, base_valid, lcfg)
        mcfg = _select(cfg, "mlp", base_train, cfg.baseline_config(4, mlp=True), cv_results)
        mlp, m_hist = train_mlp(base_train, base_valid, mcfg)
    histories["lstm_nn"], histories["mlp"] = l_hist, m_hist
    models["lstm_nn"], models["mlp"] = lstm_nn, mlp

    with _stage("baseline_evaluate", timings):
        counts[METHODS[1]] = confusion(truth, classify_windows(lstm_nn, test_windows))
        counts[METHODS[2]] = confusion(truth, classify_windows(mlp, test_windows))

    metrics = {m: compute_metrics(counts[m], 1.0) for m in METHODS}
    return ExperimentReport(metrics, counts, histories, cfg.to_dict(), seeds, timings, models,
                            cv_results, (data.norm.min, data.norm.max))


# ---------------------------------------------------------------- output

def format_table(report: ExperimentReport) -> str:
    name = report.config.get("archetype") or Path(str(report.config.get("series_csv"))).stem
    rows = [f"Dataset: {name}", "",
            f"{'Method':<20}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1':>8}"]
    for m in METHODS:
        r = report.metrics[m]
        rows.append(f"{m:<20}{r.accuracy:>10.3f}{r.precision:>11.3f}{r.recall:>9.3f}{r.f_beta:>8.3f}")
    return "\n".join(rows) + "\n"


def emit_report(report: ExperimentReport, out_dir) -> list:
    """Write the method comparison table, metrics CSV and per-model loss histories."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        table = out / "report.txt"
        table.write_text(format_table(report))
        written.append(table)
        metrics_csv = out / "metrics.csv"
        with metrics_csv.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "accuracy", "precision", "recall", "f1"])
            for m in METHODS:
                r = report.metrics[m]
                w.writerow([m] + [f"{v:.3f}" for v in (r.accuracy, r.precision, r.recall, r.f_beta)])
        written.append(metrics_csv)
        for name, hist in sorted(report.histories.items()):
            written.append(write_history(hist, out / f"history_{name}.csv"))
    except OSError as exc:
        raise IoError(f"cannot write report to {out}: {exc}") from exc
    return written


def write_history(hist: TrainingHistory, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "valid_loss"])
        for epoch, tr, va in hist.rows():
            w.writerow([epoch, repr(float(tr)), repr(float(va))])
    return path


def save_artifacts(report: ExperimentReport, out_dir) -> list:
    """Report files plus one model file per trained model."""
    out = Path(out_dir)
    written = emit_report(report, out)
    meta = {"normalization": list(report.normalization)}
    for name, model in sorted(report.models.items()):
        written.append(save_model(model, out / f"{name}.json", meta))
    return written
