"""Supervised comparison models: a stacked-LSTM sequence classifier and a 10-20-10 MLP.

Both read the same normalized windows as the predictor and are trained
with binary cross-entropy, Adagrad, dropout and L2 weight decay.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import MissingClass, ShapeError
from .lstm import (
    StackedLstmParams,
    _as_matrix,
    _masks,
    add_l2,
    backprop_stack,
    init_stacked,
    run_stack,
    WEIGHT_BLOCKS,
)
from .neural_core import (
    PROB_CLAMP,
    TrainConfig,
    TrainingHistory,
    dropout_mask,
    fit_adagrad,
    init_params,
)
from .timeseries_prep import Window

MLP_HIDDEN = (10, 20, 10)


class LstmClassifierParams(StackedLstmParams):
    """Same two-layer stack as the predictor; the head is read at the last step only."""


def _labels(windows) -> np.ndarray:
    y = np.array([w.label for w in windows], dtype=np.float64)
    if np.any(np.isnan(y)) or not (np.any(y == 1) and np.any(y == 0)):
        raise MissingClass("training windows must contain both normal and abnormal labels")
    return y


def _bce_from_prob(p, y):
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))


def _bce_dlogit(p, y):
    """d BCE / d logit through the sigmoid, respecting the probability clamp."""
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    dprob = -y / pc + (1 - y) / (1.0 - pc)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    return np.where(inside, dprob * p * (1.0 - p), 0.0)


# ---------------------------------------------------------------- LSTM classifier

def lstm_classifier_forward(windows, params: LstmClassifierParams, masks=None):
    """P(abnormal) from the head applied to the final hidden state; reads all T points."""
    X = _as_matrix(windows)
    cache = run_stack(X, params, masks)
    return cache.outputs[:, -1], cache


def lstm_classifier_loss_grad(params, X, y, l2=0.0, masks=None):
    p, cache = lstm_classifier_forward(X, params, masks)
    B, S = cache.outputs.shape
    d_logits = np.zeros((B, S))
    d_logits[:, -1] = _bce_dlogit(p, y) / B
    grads = backprop_stack(cache, d_logits, params)
    loss = _bce_from_prob(p, y) + add_l2(grads, params, l2)
    return loss, grads


def lstm_classifier_loss(params, X, y, l2=0.0):
    p, _ = lstm_classifier_forward(X, params)
    loss = _bce_from_prob(p, y)
    if l2:
        b = params.blocks()
        loss += 0.5 * l2 * sum(float(np.sum(b[n] ** 2)) for n in WEIGHT_BLOCKS)
    return loss


def train_lstm_classifier(train: Sequence[Window], valid: Sequence[Window], config: TrainConfig = TrainConfig()):
    y = _labels(train)
    X = _as_matrix(train)
    Xv, yv = (_as_matrix(valid), np.array([w.label for w in valid], dtype=np.float64)) if len(valid) else (X, y)
    params = init_stacked(config.hidden, 1, config.seed, cls=LstmClassifierParams)
    if config.epochs == 0:
        return params, TrainingHistory()

    def batch_grad(idx, rng):
        masks = _masks(len(idx), params, rng, config.dropout, config.input_dropout)
        return lstm_classifier_loss_grad(params, X[idx], y[idx], config.l2, masks)

    best, history = fit_adagrad(params.blocks(), len(X), batch_grad,
                                lambda: lstm_classifier_loss(params, Xv, yv), config)
    return LstmClassifierParams.from_blocks(best), history


# ---------------------------------------------------------------- MLP

@dataclass(eq=False)
class MlpParams:
    weights: list  # W_k with shape (out, in)
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        widths = [w.shape[0] for w in self.weights]
        if tuple(widths[:-1]) != MLP_HIDDEN or widths[-1] != 1:
            raise ShapeError(f"MLP layer widths must be {MLP_HIDDEN} + (1,), got {widths}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[0],) or (k and w.shape[1] != self.weights[k - 1].shape[0]):
                raise ShapeError(f"MLP layer {k} shapes do not chain")

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    def blocks(self) -> dict:
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            out[f"dense{k}.W"] = w
            out[f"dense{k}.b"] = b
        return out

    @classmethod
    def from_blocks(cls, blocks):
        n = len(blocks) // 2
        return cls([blocks[f"dense{k}.W"] for k in range(1, n + 1)],
                   [blocks[f"dense{k}.b"] for k in range(1, n + 1)])

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for v in self.blocks().values():
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()


def init_mlp(input_dim: int, seed=0) -> MlpParams:
    rng = np.random.default_rng(seed)
    widths = (input_dim,) + MLP_HIDDEN + (1,)
    weights = [init_params((widths[k + 1], widths[k]), widths[k], rng) for k in range(4)]
    biases = [np.zeros(widths[k + 1]) for k in range(4)]
    return MlpParams(weights, biases)


def zero_mlp(input_dim: int) -> MlpParams:
    widths = (input_dim,) + MLP_HIDDEN + (1,)
    return MlpParams([np.zeros((widths[k + 1], widths[k])) for k in range(4)],
                     [np.zeros(widths[k + 1]) for k in range(4)])


def mlp_forward(X, params: MlpParams, masks=None):
    """Returns P(abnormal) per row and the activations needed for backprop."""
    X = _as_matrix(X)
    acts = [X]
    a = X
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        if k < last:
            a = np.tanh(z)
            acts.append(a)
            if masks is not None:
                a = a * masks[k]
        else:
            a = expit(z[:, 0])
    return a, acts


def mlp_loss_grad(params: MlpParams, X, y, l2=0.0, masks=None):
    p, acts = mlp_forward(X, params, masks)
    B = X.shape[0]
    grads = {}
    delta = (_bce_dlogit(p, y) / B)[:, None]
    n = len(params.weights)
    for k in range(n - 1, -1, -1):
        inp = acts[k] if (k == 0 or masks is None) else acts[k] * masks[k - 1]
        grads[f"dense{k + 1}.W"] = delta.T @ inp
        grads[f"dense{k + 1}.b"] = delta.sum(axis=0)
        if k:
            d_in = delta @ params.weights[k]
            if masks is not None:
                d_in = d_in * masks[k - 1]
            delta = d_in * (1.0 - acts[k] ** 2)
    loss = _bce_from_prob(p, y)
    if l2:
        for k, W in enumerate(params.weights, start=1):
            grads[f"dense{k}.W"] = grads[f"dense{k}.W"] + l2 * W
            loss += 0.5 * l2 * float(np.sum(W * W))
    return loss, grads


def mlp_loss(params, X, y, l2=0.0):
    p, _ = mlp_forward(X, params)
    loss = _bce_from_prob(p, y)
    if l2:
        loss += 0.5 * l2 * sum(float(np.sum(W * W)) for W in params.weights)
    return loss


def train_mlp(train: Sequence[Window], valid: Sequence[Window], config: TrainConfig = TrainConfig()):
    """Windows are flattened to length-T vectors; dropout acts on hidden activations."""
    y = _labels(train)
    X = _as_matrix(train)
    Xv, yv = (_as_matrix(valid), np.array([w.label for w in valid], dtype=np.float64)) if len(valid) else (X, y)
    params = init_mlp(X.shape[1], config.seed)
    if config.epochs == 0:
        return params, TrainingHistory()

    def batch_grad(idx, rng):
        masks = [dropout_mask((len(idx), h), config.dropout, rng) for h in MLP_HIDDEN]
        return mlp_loss_grad(params, X[idx], y[idx], config.l2, masks)

    best, history = fit_adagrad(params.blocks(), len(X), batch_grad,
                                lambda: mlp_loss(params, Xv, yv), config)
    return MlpParams.from_blocks(best), history


# ---------------------------------------------------------------- inference

def predict_proba(params, windows) -> np.ndarray:
    if isinstance(params, MlpParams):
        p, _ = mlp_forward(windows, params)
    elif isinstance(params, LstmClassifierParams):
        p, _ = lstm_classifier_forward(windows, params)
    else:
        raise TypeError(f"not a baseline model: {type(params).__name__}")
    return p


def classify_window(params, window: Window):
    """``(label, P(abnormal))``; a probability of exactly 0.5 counts as abnormal."""
    p = float(predict_proba(params, window)[0])
    return int(p >= 0.5), p


def classify_windows(params, windows) -> np.ndarray:
    return (predict_proba(params, windows) >= 0.5).astype(int)
