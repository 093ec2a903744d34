"""Command-line front end.

Every subcommand reads an optional JSON config (``--config``), takes a
seed override (``--seed``) and writes into an output directory (``--out``,
else ``$LGNB_OUT_DIR``, else ``./lgnb_out``). The staged subcommands pass
work along through files in that directory::

    generate -> series.csv, labels.csv
    preprocess -> prepared.json
    train -> predictor.json, history_lstm_predictor.csv
    errors -> errors.csv
    fit-nb -> gauss_nb.json
    evaluate -> nb_metrics.csv

``run`` does all of it in one go and adds both baselines.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline, synth_data
from .error_bayes import ErrorDataset, evaluate_nb, fit_nb, stratified_split
from .errors import ConfigError, DetectorError, FormatError, IoError, StageError
from .lstm import prediction_errors_batch, train_predictor
from .metrics import compute_metrics
from .persistence import load_model, save_model
from .timeseries_prep import (
    DatasetSplit,
    NormalizationParams,
    Window,
    acf,
    read_series_csv,
    write_labels_csv,
    write_series_csv,
)

DEFAULT_OUT = "lgnb_out"


# ---------------------------------------------------------------- file helpers

def _split_to_json(split: DatasetSplit, norm: NormalizationParams, interval: float) -> dict:
    def enc(ws):
        return [{"offset": w.source_offset, "label": w.label, "points": [float(v) for v in w.points]} for w in ws]

    return {"normalization": [norm.min, norm.max], "sample_interval": interval,
            **{name: enc(getattr(split, name)) for name in DatasetSplit.PARTS}}


def _split_from_json(path: Path):
    try:
        doc = json.loads(path.read_text())
        parts = {name: [Window(np.array(w["points"], dtype=np.float64), w["label"], w["offset"])
                        for w in doc[name]] for name in DatasetSplit.PARTS}
        return DatasetSplit(**parts), NormalizationParams(*doc["normalization"])
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad prepared-data file ({exc})", str(path)) from None


def _write_errors(path: Path, e_train: ErrorDataset, e_test: ErrorDataset):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set", "window_id", "label"] + [f"e{j}" for j in range(e_train.dim)])
        for ds in (e_train, e_test):
            for wid, y, row in zip(ds.window_ids, ds.y, ds.X):
                w.writerow([ds.tag, int(wid), int(y)] + [repr(float(v)) for v in row])


def _read_errors(path: Path) -> dict:
    rows = {"E_train": ([], [], []), "E_test": ([], [], [])}
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for n, rec in enumerate(reader, start=2):
                try:
                    X, y, ids = rows[rec[0]]
                    ids.append(int(rec[1]))
                    y.append(int(rec[2]))
                    X.append([float(v) for v in rec[3:]])
                except (KeyError, IndexError, ValueError):
                    raise FormatError("malformed error-vector row", f"{path}:row {n}") from None
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    except StopIteration:
        raise FormatError("empty file", str(path)) from None
    return {tag: ErrorDataset(np.array(X), y, tag, ids) for tag, (X, y, ids) in rows.items() if y}


def _write_metrics(path: Path, method: str, counts):
    r = compute_metrics(counts, 1.0)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "accuracy", "precision", "recall", "f1"])
        w.writerow([method] + [f"{v:.3f}" for v in (r.accuracy, r.precision, r.recall, r.f_beta)])
    return r


# ---------------------------------------------------------------- subcommands

def _generator_overrides(cfg, **fields) -> dict:
    overrides = {"n_normal": cfg.n_normal, "n_abnormal": cfg.n_abnormal, "seed": cfg.seed, **fields}
    if cfg.noise_sigma is not None:
        overrides["noise_sigma"] = cfg.noise_sigma
    overrides.update(cfg.generator)
    return overrides


def cmd_generate(cfg, out: Path, args):
    windows, gcfg = synth_data.generate(cfg.archetype, **_generator_overrides(cfg))
    series, labels = synth_data.to_stream(windows, gcfg.sample_interval, cfg.archetype)
    write_series_csv(series, out / "series.csv")
    write_labels_csv(labels, out / "labels.csv")
    print(f"wrote {len(windows)} windows of {len(windows[0])} points to {out}")


def cmd_preprocess(cfg, out: Path, args):
    data = pipeline.prepare(cfg)
    (out / "prepared.json").write_text(json.dumps(_split_to_json(data.split, data.norm, data.sample_interval)))
    s = data.split
    print(f"normal_train={len(s.normal_train)} normal_valid={len(s.normal_valid)} "
          f"normal_test={len(s.normal_test)} abnormal_test={len(s.abnormal_test)} T={data.window_len}")


def cmd_train(cfg, out: Path, args):
    split, norm = _split_from_json(out / "prepared.json")
    params, hist = train_predictor(split, cfg.predictor_config(2))
    save_model(params, out / "predictor.json", {"normalization": [norm.min, norm.max]})
    pipeline.write_history(hist, out / "history_lstm_predictor.csv")
    print(f"best epoch {hist.best_epoch}, validation loss {hist.best_valid_loss:.6g}")


def cmd_errors(cfg, out: Path, args):
    split, _ = _split_from_json(out / "prepared.json")
    predictor = load_model(out / "predictor.json")
    data = ErrorDataset.from_vectors(prediction_errors_batch(predictor, split.normal_test + split.abnormal_test))
    e_train, e_test = stratified_split(data, cfg.nb_train_fraction, cfg.seed + 1)
    _write_errors(out / "errors.csv", e_train, e_test)
    print(f"E_train={len(e_train)} E_test={len(e_test)} d={data.dim}")


def cmd_fit_nb(cfg, out: Path, args):
    sets = _read_errors(out / "errors.csv")
    if "E_train" not in sets:
        raise ConfigError("errors.csv has no E_train rows")
    model = fit_nb(sets["E_train"], cfg.variance_floor)
    save_model(model, out / "gauss_nb.json")
    print(f"prior_abnormal={model.prior_abnormal:.4f} d={model.dim}")


def cmd_evaluate(cfg, out: Path, args):
    sets = _read_errors(out / "errors.csv")
    if "E_test" not in sets:
        raise ConfigError("errors.csv has no E_test rows")
    model = load_model(out / "gauss_nb.json")
    r = _write_metrics(out / "nb_metrics.csv", pipeline.METHODS[0], evaluate_nb(model, sets["E_test"]))
    print(f"accuracy={r.accuracy:.3f} precision={r.precision:.3f} recall={r.recall:.3f} f1={r.f_beta:.3f}")


def cmd_run(cfg, out: Path, args):
    report = pipeline.run_experiment(cfg)
    pipeline.save_artifacts(report, out)
    print(pipeline.format_table(report), end="")


def cmd_acf(cfg, out: Path, args):
    if args.input:
        values = read_series_csv(args.input).values
    else:
        windows, _ = synth_data.generate(cfg.archetype, **_generator_overrides(cfg, n_abnormal=0))
        values = synth_data.normal_stream(windows)
    path = out / "acf.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lag", "acf"])
        for lag in range(args.max_lag + 1):
            r = acf(values, lag)
            w.writerow([lag, repr(r)])
            print(f"{lag}\t{r:.4f}")


def cmd_cv(cfg, out: Path, args):
    if not cfg.cv_grid:
        raise ConfigError("cv needs a non-empty cv_grid in the config")
    data = pipeline.prepare(cfg)
    res = pipeline.crossval_select(data.split.normal_train, "predictor", cfg.cv_grid, cfg.predictor_config(2),
                                   cfg.cv_folds, cfg.cv_epochs, cfg.seed + 2)
    path = out / "cv.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["candidate", "mean_score"] + [f"fold{k}" for k in range(cfg.cv_folds)])
        for overrides, scores, mean in res.candidates:
            w.writerow([json.dumps(overrides, sort_keys=True), repr(mean)] + [repr(s) for s in scores])
            print(f"{json.dumps(overrides, sort_keys=True)}\tmean={mean:.6g}")
    print(f"best: {json.dumps(res.best, sort_keys=True)}")


COMMANDS = {
    "generate": (cmd_generate, "write a synthetic series and its window labels as CSV"),
    "preprocess": (cmd_preprocess, "downsample, window, split and normalize"),
    "train": (cmd_train, "train the stacked-LSTM predictor on normal windows"),
    "errors": (cmd_errors, "compute prediction-error vectors and split them E_train/E_test"),
    "fit-nb": (cmd_fit_nb, "fit Gaussian naive Bayes on E_train"),
    "evaluate": (cmd_evaluate, "score the naive Bayes model on E_test"),
    "run": (cmd_run, "full experiment with both baselines and a metrics table"),
    "acf": (cmd_acf, "autocorrelation of a series CSV or of generated normal data"),
    "cv": (cmd_cv, "k-fold selection of predictor hyperparameters from cv_grid"),
}

# stage names used in error messages when a subcommand fails outside run_experiment
_STAGES = {"fit-nb": "nb_fit", "evaluate": "nb_evaluate", "train": "predictor_training",
           "errors": "error_extraction", "cv": "crossval"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of ExperimentConfig fields")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help=f"output directory (default ${pipeline.OUT_DIR_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--archetype", choices=sorted(synth_data.GENERATORS), help="synthetic data archetype")
    common.add_argument("--epochs", type=int, help="override the epoch budget")
    common.add_argument("-v", "--verbose", action="store_true", help="log stage progress")

    parser = argparse.ArgumentParser(prog="lgnb", description="LSTM prediction errors + Gaussian naive Bayes "
                                     "anomaly detection for sensor time series.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "acf":
            p.add_argument("--input", help="series CSV (timestamp,value); default generated normal data")
            p.add_argument("--max-lag", type=int, default=10)
    return parser


def _config(args) -> pipeline.ExperimentConfig:
    cfg = pipeline.load_config(args.config) if args.config else pipeline.ExperimentConfig()
    for name in ("seed", "archetype", "epochs"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = Path(args.out or os.environ.get(pipeline.OUT_DIR_ENV) or DEFAULT_OUT)
    handler, _ = COMMANDS[args.command]
    try:
        cfg = _config(args)
        out.mkdir(parents=True, exist_ok=True)
        handler(cfg, out, args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DetectorError, ValueError, ArithmeticError, OSError) as exc:
        stage = "config" if isinstance(exc, ConfigError) else _STAGES.get(args.command, args.command)
        print(f"error: {StageError(stage, exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
