"""Gaussian naive Bayes on prediction-error vectors.

Each attribute (the residual at one window position) gets an independent
Gaussian per class; the class prior is Bernoulli. Everything is evaluated
in log space so long error vectors do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import EmptyDataset, EmptyFeatures, MissingClass, ShapeError
from .lstm import ErrorVector
from .metrics import ConfusionCounts, confusion

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(eq=False)
class ErrorDataset:
    X: np.ndarray   # (N, d)
    y: np.ndarray   # (N,) in {0, 1}
    tag: str = "E_train"
    window_ids: np.ndarray = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y).astype(int).reshape(-1)
        if self.X.shape[0] != self.y.size:
            raise ShapeError(f"{self.X.shape[0]} vectors but {self.y.size} labels")
        if self.window_ids is None:
            self.window_ids = np.arange(self.y.size)
        self.window_ids = np.asarray(self.window_ids).astype(int).reshape(-1)

    @classmethod
    def from_vectors(cls, vectors: Sequence[ErrorVector], tag="E_train"):
        if not vectors:
            raise EmptyDataset("no error vectors")
        d = {len(v) for v in vectors}
        if len(d) != 1:
            raise ShapeError(f"error vectors have mixed lengths {sorted(d)}")
        return cls(np.stack([v.errors for v in vectors]), [v.label for v in vectors], tag,
                   [v.window_id for v in vectors])

    def __len__(self):
        return self.y.size

    @property
    def dim(self):
        return self.X.shape[1]

    def subset(self, idx, tag=None):
        return ErrorDataset(self.X[idx], self.y[idx], tag or self.tag, self.window_ids[idx])


@dataclass(eq=False)
class GaussNBModel:
    prior_abnormal: float
    mean: np.ndarray       # (2, d); row 0 normal, row 1 abnormal
    variance: np.ndarray   # (2, d)
    variance_floor: float = 1e-9

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape or self.mean.ndim != 2 or self.mean.shape[0] != 2:
            raise ShapeError("mean and variance must both be (2, d)")
        if not 0.0 < self.prior_abnormal < 1.0:
            raise ValueError(f"prior must lie in (0, 1), got {self.prior_abnormal}")
        if np.any(self.variance < self.variance_floor):
            raise ValueError("variance below the floor")

    @property
    def dim(self):
        return self.mean.shape[1]


def fit_nb(train: ErrorDataset, variance_floor: float = 1e-9) -> GaussNBModel:
    """Maximum-likelihood fit: abnormal fraction, per-class means, biased variances."""
    if train.dim == 0:
        raise EmptyFeatures("error vectors have no attributes")
    mean = np.empty((2, train.dim))
    var = np.empty((2, train.dim))
    for c in (0, 1):
        rows = train.X[train.y == c]
        if rows.shape[0] == 0:
            raise MissingClass(f"class {c} absent from {train.tag}")
        mean[c] = rows.mean(axis=0)
        var[c] = np.maximum(((rows - mean[c]) ** 2).mean(axis=0), variance_floor)
    prior = float(np.count_nonzero(train.y == 1)) / len(train)
    return GaussNBModel(prior, mean, var, variance_floor)


def _class_log_likelihoods(model: GaussNBModel, X: np.ndarray) -> np.ndarray:
    """(N, 2) joint log-likelihoods ln P(y=c) + sum_j ln N(x_j; mu_cj, var_cj)."""
    if X.shape[-1] != model.dim:
        raise ShapeError(f"vector has {X.shape[-1]} attributes, model expects {model.dim}")
    log_prior = np.log([1.0 - model.prior_abnormal, model.prior_abnormal])
    out = np.empty((X.shape[0], 2))
    for c in (0, 1):
        v = model.variance[c]
        dev = X - model.mean[c]
        out[:, c] = log_prior[c] + np.sum(-0.5 * (LOG_2PI + np.log(v)) - dev * dev / (2.0 * v), axis=1)
    return out


def _as_rows(x):
    if isinstance(x, ErrorVector):
        return x.errors[None, :]
    if isinstance(x, ErrorDataset):
        return x.X
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def joint_log_likelihood(model: GaussNBModel, x, c: int, include_prior: bool = True) -> float:
    row = _as_rows(x)
    if row.shape[0] != 1:
        raise ShapeError("joint_log_likelihood takes a single vector")
    jll = _class_log_likelihoods(model, row)[0, c]
    if not include_prior:
        jll -= math.log(model.prior_abnormal if c == 1 else 1.0 - model.prior_abnormal)
    return float(jll)


def posterior_abnormal(model: GaussNBModel, X) -> tuple:
    """Labels and P(y=1 | x) for each row; ties go to the abnormal class."""
    jll = _class_log_likelihoods(model, _as_rows(X))
    # exp(jll1 - logaddexp(jll0, jll1)) written as a logistic of the log ratio,
    # which is exactly 0.5 on a tie and never overflows
    post = expit(jll[:, 1] - jll[:, 0])
    labels = (jll[:, 1] >= jll[:, 0]).astype(int)
    return labels, post


def classify(model: GaussNBModel, x) -> tuple:
    labels, post = posterior_abnormal(model, x)
    if labels.size != 1:
        raise ShapeError("classify takes a single vector; use posterior_abnormal for batches")
    return int(labels[0]), float(post[0])


def evaluate_nb(model: GaussNBModel, test: ErrorDataset) -> ConfusionCounts:
    if len(test) == 0:
        raise EmptyDataset("empty test set")
    labels, _ = posterior_abnormal(model, test.X)
    return confusion(test.y, labels)


def stratified_split(data: ErrorDataset, train_fraction: float = 0.8, seed: int = 0):
    """Per-class seeded shuffle; floor(train_fraction * n_c) of each class goes to E_train."""
    rng = np.random.default_rng(seed)
    tr, te = [], []
    for c in (0, 1):
        idx = np.flatnonzero(data.y == c)
        idx = idx[rng.permutation(idx.size)]
        k = math.floor(train_fraction * idx.size + 1e-9)
        tr.extend(idx[:k].tolist())
        te.extend(idx[k:].tolist())
    tr, te = np.array(sorted(tr), dtype=int), np.array(sorted(te), dtype=int)
    return data.subset(tr, "E_train"), data.subset(te, "E_test")
