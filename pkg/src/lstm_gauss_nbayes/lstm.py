"""Two-layer stacked LSTM used as a one-step-ahead predictor.

All recurrences run over a batch of windows at once: arrays are laid out
``(batch, step, feature)``.  Gate rows inside ``W``, ``U`` and ``b`` are
stacked in the order input, forget, output, candidate.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np
from scipy.special import expit

from .errors import CacheMismatch, EmptyDataset, InvalidWindow, ShapeError
from .neural_core import TrainConfig, TrainingHistory, dropout_mask, fit_adagrad, init_params
from .timeseries_prep import DatasetSplit, Window

GATES = ("i", "f", "o", "g")


@dataclass(eq=False)
class LstmCellParams:
    W: np.ndarray  # (4H, D)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        h4, _ = self.W.shape
        if h4 % 4 or self.U.shape != (h4, h4 // 4) or self.b.shape != (h4,):
            raise ShapeError(f"inconsistent LSTM cell shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden(self):
        return self.U.shape[1]

    @property
    def input_dim(self):
        return self.W.shape[1]

    def gate(self, name):
        """Views ``(W_g, U_g, b_g)`` of one gate."""
        k = GATES.index(name)
        H = self.hidden
        sl = slice(k * H, (k + 1) * H)
        return self.W[sl], self.U[sl], self.b[sl]


@dataclass(eq=False)
class StackedLstmParams:
    layer1: LstmCellParams
    layer2: LstmCellParams
    w_out: np.ndarray  # (H2,)
    b_out: np.ndarray  # (1,)

    def __post_init__(self):
        if self.layer2.input_dim != self.layer1.hidden:
            raise ShapeError("layer2 input dim must equal layer1 hidden dim")
        self.w_out = np.asarray(self.w_out, dtype=np.float64).reshape(-1)
        self.b_out = np.asarray(self.b_out, dtype=np.float64).reshape(1)
        if self.w_out.shape != (self.layer2.hidden,):
            raise ShapeError("output head width must equal layer2 hidden dim")

    def blocks(self) -> dict:
        """Named views of every parameter array (mutating them mutates self)."""
        return {
            "layer1.W": self.layer1.W, "layer1.U": self.layer1.U, "layer1.b": self.layer1.b,
            "layer2.W": self.layer2.W, "layer2.U": self.layer2.U, "layer2.b": self.layer2.b,
            "head.w": self.w_out, "head.b": self.b_out,
        }

    @classmethod
    def from_blocks(cls, blocks):
        return cls(
            LstmCellParams(blocks["layer1.W"], blocks["layer1.U"], blocks["layer1.b"]),
            LstmCellParams(blocks["layer2.W"], blocks["layer2.U"], blocks["layer2.b"]),
            blocks["head.w"], blocks["head.b"],
        )

    def copy(self):
        return type(self).from_blocks({k: v.copy() for k, v in self.blocks().items()})

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for v in self.blocks().values():
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()


WEIGHT_BLOCKS = ("layer1.W", "layer1.U", "layer2.W", "layer2.U", "head.w")


def init_cell(input_dim: int, hidden: int, rng, forget_bias: float = 1.0) -> LstmCellParams:
    fan_in = input_dim + hidden
    W = init_params((4 * hidden, input_dim), fan_in, rng)
    U = init_params((4 * hidden, hidden), fan_in, rng)
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = forget_bias
    return LstmCellParams(W, U, b)


def init_stacked(hidden: int = 32, input_dim: int = 1, seed=0, hidden2: Optional[int] = None,
                 forget_bias: float = 1.0, cls=StackedLstmParams):
    rng = np.random.default_rng(seed)
    hidden2 = hidden if hidden2 is None else hidden2
    l1 = init_cell(input_dim, hidden, rng, forget_bias)
    l2 = init_cell(hidden, hidden2, rng, forget_bias)
    w_out = init_params((hidden2,), hidden2, rng)
    return cls(l1, l2, w_out, np.zeros(1))


def zeros_like_params(hidden: int, input_dim: int = 1, cls=StackedLstmParams):
    def cell(d, h):
        return LstmCellParams(np.zeros((4 * h, d)), np.zeros((4 * h, h)), np.zeros(4 * h))
    return cls(cell(input_dim, hidden), cell(hidden, hidden), np.zeros(hidden), np.zeros(1))


# ---------------------------------------------------------------- single step

@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray


def lstm_cell_step(x, prev: CellState, params: LstmCellParams):
    """One LSTM update for an input vector (or a batch of them, leading axis)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim or prev.h.shape[-1] != params.hidden:
        raise ShapeError(f"input dim {x.shape[-1]} / state dim {prev.h.shape[-1]} do not match "
                         f"cell ({params.input_dim}, {params.hidden})")
    H = params.hidden
    z = x @ params.W.T + prev.h @ params.U.T + params.b
    i = expit(z[..., :H])
    f = expit(z[..., H : 2 * H])
    o = expit(z[..., 2 * H : 3 * H])
    g = np.tanh(z[..., 3 * H :])
    c = f * prev.c + i * g
    h = o * np.tanh(c)
    return CellState(h, c), {"i": i, "f": f, "o": o, "g": g, "c_prev": prev.c, "h_prev": prev.h, "x": x}


# ---------------------------------------------------------------- batched layers
# Internally arrays are time-major, (step, batch, feature), so that the slice
# for one step is contiguous.

@dataclass
class _LayerCache:
    X: np.ndarray      # (S, B, D) input after dropout
    A: np.ndarray      # (S, B, 4H) gate activations
    C: np.ndarray      # (S, B, H) cell states
    TC: np.ndarray     # (S, B, H) tanh(C)
    H: np.ndarray      # (S, B, H) hidden outputs


def _layer_forward(X, p: LstmCellParams) -> _LayerCache:
    S, B, _ = X.shape
    Hd = p.hidden
    s3 = 3 * Hd
    # sigmoid(z) = (1 + tanh(z/2)) / 2: pre-scale the sigmoid gate rows by 1/2
    # so one tanh call per step evaluates all four gates
    scale = np.ones(4 * Hd)
    scale[:s3] = 0.5
    P = X @ (p.W * scale[:, None]).T + p.b * scale
    UT = np.ascontiguousarray((p.U * scale[:, None]).T)
    A = np.empty((S, B, 4 * Hd))
    C = np.empty((S, B, Hd))
    TC = np.empty((S, B, Hd))
    Hs = np.empty((S, B, Hd))
    h = np.zeros((B, Hd))
    c = np.zeros((B, Hd))
    for t in range(S):
        a = A[t]
        np.tanh(P[t] + h @ UT, out=a)
        sg = a[:, :s3]
        sg *= 0.5
        sg += 0.5
        c = np.add(a[:, Hd : 2 * Hd] * c, a[:, :Hd] * a[:, s3:], out=C[t])
        tc = np.tanh(c, out=TC[t])
        h = np.multiply(a[:, 2 * Hd : s3], tc, out=Hs[t])
    return _LayerCache(X, A, C, TC, Hs)


@numba.njit(cache=True)
def _gate_grads(dH, A, C, TC, U):
    """Reverse-time sweep returning dL/d(gate pre-activations), (S, B, 4H)."""
    S, B, H = dH.shape
    dZ = np.empty((S, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(S - 1, -1, -1):
        dz = dZ[t]
        for b in range(B):
            for j in range(H):
                i_ = A[t, b, j]
                f_ = A[t, b, H + j]
                o_ = A[t, b, 2 * H + j]
                g_ = A[t, b, 3 * H + j]
                tc = TC[t, b, j]
                dh = dH[t, b, j] + dh_next[b, j]
                dc = dc_next[b, j] + dh * o_ * (1.0 - tc * tc)
                c_prev = C[t - 1, b, j] if t > 0 else 0.0
                dz[b, j] = dc * g_ * i_ * (1.0 - i_)
                dz[b, H + j] = dc * c_prev * f_ * (1.0 - f_)
                dz[b, 2 * H + j] = dh * tc * o_ * (1.0 - o_)
                dz[b, 3 * H + j] = dc * i_ * (1.0 - g_ * g_)
                dc_next[b, j] = dc * f_
        dh_next = np.dot(dz, U)
    return dZ


def _layer_backward(dH, cache: _LayerCache, p: LstmCellParams):
    """BPTT through one layer. ``dH`` is dL/dh from above, (S, B, H)."""
    S, B, Hd = dH.shape
    dZ = _gate_grads(np.ascontiguousarray(dH), cache.A, cache.C, cache.TC, np.ascontiguousarray(p.U))
    flat = dZ.reshape(S * B, 4 * Hd)
    dW = flat.T @ cache.X.reshape(S * B, -1)
    # h_{t-1} is zero at t = 0, so only steps 1.. contribute to dU
    dU = flat[B:].T @ cache.H[:-1].reshape((S - 1) * B, Hd)
    db = flat.sum(axis=0)
    dX = dZ @ p.W
    return dW, dU, db, dX


# ---------------------------------------------------------------- stacked net

@dataclass
class ForwardCache:
    inputs: np.ndarray        # (B, S) the points fed to layer 1
    masks: tuple              # dropout masks (input, layer1->2, layer2->head), each (B, dim)
    layer1: _LayerCache
    layer2: _LayerCache
    top: np.ndarray           # (S, B, H2) layer2 outputs after head dropout
    outputs: np.ndarray       # (B, S) sigmoid head output per step
    fingerprint: str = ""

    def gates_in_range(self) -> bool:
        ok = True
        for lc in (self.layer1, self.layer2):
            H = lc.H.shape[-1]
            sg = lc.A[..., : 3 * H]
            cand = lc.A[..., 3 * H :]
            ok &= bool(np.all((sg >= 0) & (sg <= 1)) and np.all(np.abs(cand) <= 1))
        return ok


def _masks(B, params, rng, dropout, input_dropout):
    if rng is None:
        return None
    return (
        dropout_mask((B, params.layer1.input_dim), input_dropout, rng),
        dropout_mask((B, params.layer1.hidden), dropout, rng),
        dropout_mask((B, params.layer2.hidden), dropout, rng),
    )


def run_stack(inputs: np.ndarray, params: StackedLstmParams, masks=None) -> ForwardCache:
    """Run both layers and the sigmoid head at every step of ``inputs`` (B, S)."""
    X = np.ascontiguousarray(inputs.T)[:, :, None]
    if masks is not None:
        X = X * masks[0]
    l1 = _layer_forward(X, params.layer1)
    X2 = l1.H if masks is None else l1.H * masks[1]
    l2 = _layer_forward(X2, params.layer2)
    top = l2.H if masks is None else l2.H * masks[2]
    outputs = expit(top @ params.w_out + params.b_out[0]).T
    return ForwardCache(inputs, masks, l1, l2, top, outputs)


def backprop_stack(cache: ForwardCache, d_logits: np.ndarray, params: StackedLstmParams) -> dict:
    """Gradients of all blocks given dL/d(head pre-activation) at each step (B, S)."""
    dl = np.ascontiguousarray(d_logits.T)
    grads = {"head.w": np.einsum("sb,sbh->h", dl, cache.top), "head.b": np.array([dl.sum()])}
    dTop = dl[:, :, None] * params.w_out
    dH2 = dTop if cache.masks is None else dTop * cache.masks[2]
    dW, dU, db, dX2 = _layer_backward(dH2, cache.layer2, params.layer2)
    grads["layer2.W"], grads["layer2.U"], grads["layer2.b"] = dW, dU, db
    dH1 = dX2 if cache.masks is None else dX2 * cache.masks[1]
    dW, dU, db, _ = _layer_backward(dH1, cache.layer1, params.layer1)
    grads["layer1.W"], grads["layer1.U"], grads["layer1.b"] = dW, dU, db
    return grads


def add_l2(grads: dict, params, l2: float, names=WEIGHT_BLOCKS) -> float:
    """Add ``l2 * W`` to weight gradients; return the penalty ``l2/2 * sum W^2``."""
    if l2 == 0.0:
        return 0.0
    blocks = params.blocks()
    penalty = 0.0
    for name in names:
        w = blocks[name]
        grads[name] = grads[name] + l2 * w
        penalty += 0.5 * l2 * float(np.sum(w * w))
    return penalty


def _as_matrix(windows) -> np.ndarray:
    if isinstance(windows, Window):
        return windows.points[None, :]
    if isinstance(windows, np.ndarray):
        return np.atleast_2d(windows).astype(np.float64)
    return np.stack([w.points if isinstance(w, Window) else np.asarray(w, dtype=np.float64) for w in windows])


def _fingerprint(inputs, params):
    h = hashlib.blake2b(digest_size=16)
    h.update(params.fingerprint().encode())
    h.update(np.ascontiguousarray(inputs).tobytes())
    return h.hexdigest()


def forward(windows, params: StackedLstmParams, train: bool = False, rng=None,
            dropout: float = 0.0, input_dropout: float = 0.0):
    """One-step-ahead predictions for each window.

    For a window of length T the network reads points ``1..T-1``; entry
    ``t`` of the result estimates point ``t+1`` from points ``1..t``.
    In ``train`` mode a fresh dropout mask per window is drawn from ``rng``
    for the input, layer1->layer2 and layer2->head connections.
    """
    X = _as_matrix(windows)
    if X.shape[1] < 2:
        raise InvalidWindow("window length must be >= 2")
    masks = None
    if train:
        masks = _masks(X.shape[0], params, np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng,
                       dropout, input_dropout)
    cache = run_stack(X[:, :-1], params, masks)
    cache.fingerprint = _fingerprint(X[:, :-1], params)
    preds = cache.outputs
    return (preds[0] if isinstance(windows, Window) else preds), cache


def _final_step_loss_grad(cache: ForwardCache, targets: np.ndarray, params, l2: float):
    """Mean over the batch of 0.5*(pred_{T-1} - x_T)^2, plus the L2 penalty."""
    B, S = cache.outputs.shape
    p = cache.outputs[:, -1]
    diff = p - targets
    loss = 0.5 * float(np.mean(diff * diff))
    d_logits = np.zeros((B, S))
    d_logits[:, -1] = diff * p * (1.0 - p) / B
    grads = backprop_stack(cache, d_logits, params)
    loss += add_l2(grads, params, l2)
    return loss, grads


def bptt_backward(cache: ForwardCache, windows, params: StackedLstmParams, l2: float = 0.0) -> dict:
    """Gradients of the final-step squared error (mean over the batch) plus ``l2/2*|W|^2``."""
    X = _as_matrix(windows)
    if cache.fingerprint != _fingerprint(X[:, :-1], params):
        raise CacheMismatch("forward cache was produced for different windows or parameters")
    _, grads = _final_step_loss_grad(cache, X[:, -1], params, l2)
    return grads


def predictor_loss(params: StackedLstmParams, windows, l2: float = 0.0) -> float:
    X = _as_matrix(windows)
    cache = run_stack(X[:, :-1], params)
    diff = cache.outputs[:, -1] - X[:, -1]
    loss = 0.5 * float(np.mean(diff * diff))
    if l2:
        blocks = params.blocks()
        loss += 0.5 * l2 * sum(float(np.sum(blocks[n] ** 2)) for n in WEIGHT_BLOCKS)
    return loss


def train_predictor(split, config: TrainConfig = TrainConfig(), init: Optional[StackedLstmParams] = None):
    """Fit the predictor on normal training windows, model-selecting on normal validation windows.

    ``split`` is a :class:`DatasetSplit` or a ``(train_windows, valid_windows)`` pair.
    Returns ``(params, history)``; ``params`` is the snapshot with the lowest validation loss.
    """
    if isinstance(split, DatasetSplit):
        train, valid = split.normal_train, split.normal_valid
    else:
        train, valid = split
    if len(train) == 0:
        raise EmptyDataset("no normal training windows")
    Xtr = _as_matrix(train)
    Xva = _as_matrix(valid) if len(valid) else Xtr
    params = init.copy() if init is not None else init_stacked(config.hidden, 1, config.seed)
    if config.epochs == 0:
        return params, TrainingHistory()

    def batch_grad(idx, rng):
        Xb = Xtr[idx]
        masks = _masks(len(idx), params, rng, config.dropout, config.input_dropout)
        cache = run_stack(Xb[:, :-1], params, masks)
        return _final_step_loss_grad(cache, Xb[:, -1], params, config.l2)

    best, history = fit_adagrad(params.blocks(), len(Xtr), batch_grad,
                                lambda: predictor_loss(params, Xva), config)
    return StackedLstmParams.from_blocks(best), history


def prediction_errors(params: StackedLstmParams, window: Window) -> "ErrorVector":
    """Signed residuals ``x_{t+1} - prediction_t`` for t = 1..T-1 (inference mode)."""
    preds, _ = forward(window, params)
    return ErrorVector(window.points[1:] - preds, window.label, window.source_offset)


def prediction_errors_batch(params: StackedLstmParams, windows: Sequence[Window]) -> list:
    if not windows:
        return []
    X = _as_matrix(windows)
    preds = run_stack(X[:, :-1], params).outputs
    return [ErrorVector(X[k, 1:] - preds[k], w.label, w.source_offset) for k, w in enumerate(windows)]


@dataclass(eq=False)
class ErrorVector:
    errors: np.ndarray
    label: Optional[int] = None
    window_id: int = 0

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.errors)):
            raise ValueError("error vector has non-finite entries")

    def __len__(self):
        return self.errors.size
