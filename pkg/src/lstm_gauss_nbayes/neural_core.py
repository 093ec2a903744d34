"""Numerical building blocks shared by the predictor and the baselines.

Parameters of every network are kept as ``dict[str, np.ndarray]`` (one
named block per weight matrix / bias vector), which is what the optimizer,
the gradient checker and the model files all operate on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.special import expit

from .errors import DivergedTraining, InvalidRate, ShapeError

PROB_CLAMP = 1e-12


def sigmoid(x):
    """Logistic function; stable for arbitrarily large |x|."""
    out = expit(x)
    return float(out) if np.ndim(out) == 0 else out


def tanh_act(x):
    out = np.tanh(x)
    return float(out) if np.ndim(out) == 0 else out


def mse_final_step(prediction, target):
    """Half squared error and its derivative w.r.t. the prediction."""
    diff = prediction - target
    return 0.5 * diff * diff, diff


def binary_cross_entropy(prob, label):
    p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -(label * np.log(p) + (1 - label) * np.log1p(-p))
    grad = -label / p + (1 - label) / (1.0 - p)
    if np.ndim(loss) == 0:
        return float(loss), float(grad)
    return loss, grad


@dataclass
class AdagradState:
    learning_rate: float = 0.05
    epsilon: float = 1e-8
    accumulators: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon >= 0 or not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0 and epsilon >= 0")


def adagrad_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdagradState):
    """In-place Adagrad update: ``acc += g**2; p -= lr * g / (sqrt(acc) + eps)``."""
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {np.shape(g)}, parameter has {p.shape}")
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(p)
        acc += g * g
        p -= state.learning_rate * g / (np.sqrt(acc) + state.epsilon)
    return params, state


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep * (1.0 / (1.0 - rate))


def init_params(shape, fan_in: int, seed) -> np.ndarray:
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def copy_params(params: Mapping[str, np.ndarray]) -> dict:
    return {k: v.copy() for k, v in params.items()}


def numerical_gradient(loss_fn: Callable[[dict], float], params: dict, epsilon: float = 1e-5) -> dict:
    """Central differences, perturbing each scalar in place then restoring it."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn(params)
            flat[i] = orig - epsilon
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * epsilon)
        grads[name] = g
    return grads


def finite_diff_grad_check(loss_fn, params: dict, analytic: Mapping[str, np.ndarray], epsilon: float = 1e-5) -> float:
    """Max over all scalars of ``|ga - gn| / max(|ga|, |gn|, 1e-8)``."""
    numeric = numerical_gradient(loss_fn, params, epsilon)
    worst = 0.0
    for name, gn in numeric.items():
        ga = np.asarray(analytic[name])
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    """Hyperparameters common to every trainable model here."""

    hidden: int = 32
    lr: float = 0.05
    epochs: int = 1000
    dropout: float = 0.1
    input_dropout: float = 0.0
    l2: float = 1e-4
    seed: int = 0
    batch_size: int = 32
    patience: Optional[int] = None
    epsilon: float = 1e-8


@dataclass
class TrainingHistory:
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    best_epoch: int = -1

    def rows(self):
        return [(i + 1, t, v) for i, (t, v) in enumerate(zip(self.train_loss, self.valid_loss))]

    @property
    def best_valid_loss(self):
        return self.valid_loss[self.best_epoch] if self.best_epoch >= 0 else math.inf


def fit_adagrad(params: dict, n_train: int, batch_grad, valid_loss, cfg: TrainConfig):
    """Generic epoch loop: seeded shuffle, mini-batches, Adagrad, best-valid snapshot.

    ``params`` is updated in place (pass blocks of a model you own).
    ``batch_grad(idx, rng) -> (mean loss, grads)`` for the training
    windows ``idx``; ``valid_loss() -> float`` evaluates the current
    parameters without dropout. Returns a copy of the best blocks and the
    loss history.
    """
    rng = np.random.default_rng(cfg.seed)
    state = AdagradState(cfg.lr, cfg.epsilon)
    history = TrainingHistory()
    best = copy_params(params)
    best_loss = math.inf
    work = params
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = batch_grad(idx, rng)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergedTraining(epoch + 1)
            total += loss * len(idx)
            adagrad_step(work, grads, state)
        vloss = valid_loss()
        if not math.isfinite(vloss):
            raise DivergedTraining(epoch + 1, "non-finite validation loss")
        history.train_loss.append(total / n_train)
        history.valid_loss.append(vloss)
        if vloss < best_loss:
            best_loss = vloss
            best = copy_params(work)
            history.best_epoch = epoch
        elif cfg.patience is not None and epoch - history.best_epoch >= cfg.patience:
            break
    return best, history

