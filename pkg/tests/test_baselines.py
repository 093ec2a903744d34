"""LSTM sequence classifier and 10-20-10 MLP baselines."""

import numpy as np
import pytest

from lstm_gauss_nbayes.baselines import (
    MLP_HIDDEN,
    LstmClassifierParams,
    MlpParams,
    classify_window,
    classify_windows,
    init_mlp,
    lstm_classifier_forward,
    lstm_classifier_loss,
    lstm_classifier_loss_grad,
    mlp_forward,
    mlp_loss,
    mlp_loss_grad,
    predict_proba,
    train_lstm_classifier,
    train_mlp,
    zero_mlp,
)
from lstm_gauss_nbayes.errors import MissingClass, ShapeError
from lstm_gauss_nbayes.lstm import init_stacked, zeros_like_params
from lstm_gauss_nbayes.neural_core import TrainConfig, finite_diff_grad_check
from lstm_gauss_nbayes.timeseries_prep import Window


def random_classifier(hidden, seed):
    params = init_stacked(hidden, 1, seed, cls=LstmClassifierParams)
    rng = np.random.default_rng(seed)
    for v in params.blocks().values():
        v[...] = rng.uniform(-1, 1, v.shape)
    return params


def toy_windows(n, seed, T=20):
    """Class 1 iff the window mean exceeds 0.5."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        x = np.clip(rng.uniform(0.2, 0.8) + rng.normal(0, 0.1, T), 0, 1)
        out.append(Window(x, int(x.mean() > 0.5), k))
    return out


@pytest.fixture(scope="module")
def toy():
    return toy_windows(400, 1), toy_windows(100, 2), toy_windows(200, 3)


class TestGradients:
    def test_lstm_classifier(self):
        rng = np.random.default_rng(0)
        for seed in range(3):
            params = random_classifier(4, seed)
            X, y = rng.random((3, 8)), np.array([0.0, 1.0, 1.0])
            _, grads = lstm_classifier_loss_grad(params, X, y, l2=0.01)
            err = finite_diff_grad_check(lambda b: lstm_classifier_loss(params, X, y, 0.01), params.blocks(), grads)
            assert err <= 1e-4

    def test_mlp(self):
        rng = np.random.default_rng(1)
        for seed in range(3):
            params = init_mlp(8, seed)
            for v in params.blocks().values():
                v[...] = rng.uniform(-1, 1, v.shape)
            X, y = rng.random((5, 8)), np.array([0.0, 1.0, 1.0, 0.0, 1.0])
            _, grads = mlp_loss_grad(params, X, y, l2=0.01)
            err = finite_diff_grad_check(lambda b: mlp_loss(params, X, y, 0.01), params.blocks(), grads)
            assert err <= 1e-4


class TestStructure:
    def test_mlp_widths(self):
        params = init_mlp(12, 0)
        assert [w.shape for w in params.weights] == [(10, 12), (20, 10), (10, 20), (1, 10)]
        assert MLP_HIDDEN == (10, 20, 10)
        with pytest.raises(ShapeError):
            MlpParams([np.zeros((5, 3)), np.zeros((1, 5))], [np.zeros(5), np.zeros(1)])

    def test_zero_mlp_outputs_half(self):
        p, _ = mlp_forward(np.random.default_rng(0).random((7, 6)), zero_mlp(6))
        assert p.tolist() == [0.5] * 7

    def test_lstm_classifier_reads_every_point(self):
        params = random_classifier(3, 2)
        x = np.random.default_rng(3).random(10)
        y = x.copy()
        y[-1] += 0.2
        assert predict_proba(params, Window(x))[0] != predict_proba(params, Window(y))[0]

    def test_gate_ranges(self):
        params = random_classifier(5, 4)
        _, cache = lstm_classifier_forward(np.random.default_rng(0).random((6, 12)), params)
        assert cache.gates_in_range()


class TestClassify:
    def test_half_probability_is_abnormal(self):
        label, p = classify_window(zero_mlp(5), Window(np.linspace(0, 1, 5)))
        assert (label, p) == (1, 0.5)
        label, p = classify_window(zeros_like_params(3, cls=LstmClassifierParams), Window(np.linspace(0, 1, 5)))
        assert (label, p) == (1, 0.5)

    def test_label_thresholds_probability(self):
        params = random_classifier(3, 5)
        ws = toy_windows(30, 9)
        probs = predict_proba(params, ws)
        assert classify_windows(params, ws).tolist() == (probs >= 0.5).astype(int).tolist()

    def test_mlp_inference_ignores_window_order(self):
        params = init_mlp(20, 1)
        ws = toy_windows(15, 4)
        order = np.random.default_rng(0).permutation(15)
        a = predict_proba(params, ws)
        b = predict_proba(params, [ws[i] for i in order])
        assert a[order].tolist() == b.tolist()

    def test_rejects_other_models(self):
        with pytest.raises(TypeError):
            predict_proba(init_stacked(2, 1, 0), [Window([0.1, 0.2])])


class TestTraining:
    def test_zero_epochs(self, toy):
        tr, va, _ = toy
        params, _ = train_lstm_classifier(tr, va, TrainConfig(hidden=4, epochs=0, seed=3))
        assert params.fingerprint() == init_stacked(4, 1, 3, cls=LstmClassifierParams).fingerprint()
        params, _ = train_mlp(tr, va, TrainConfig(epochs=0, seed=3))
        assert params.fingerprint() == init_mlp(20, 3).fingerprint()

    def test_missing_class(self):
        ws = [Window([0.1, 0.2], 0), Window([0.3, 0.1], 0)]
        with pytest.raises(MissingClass):
            train_mlp(ws, ws, TrainConfig(epochs=1))
        with pytest.raises(MissingClass):
            train_lstm_classifier(ws, ws, TrainConfig(epochs=1))

    def test_lstm_classifier_learns_toy_task(self, toy):
        tr, va, te = toy
        cfg = TrainConfig(hidden=8, epochs=50, seed=0, dropout=0.0)
        params, hist = train_lstm_classifier(tr, va, cfg)
        y = np.array([w.label for w in te])
        assert np.mean(classify_windows(params, te) == y) >= 0.95
        _, hist2 = train_lstm_classifier(tr, va, cfg)
        assert hist.rows() == hist2.rows()

    def test_mlp_learns_toy_task(self, toy):
        tr, va, te = toy
        params, hist = train_mlp(tr, va, TrainConfig(epochs=200, seed=0, dropout=0.0))
        y = np.array([w.label for w in te])
        assert np.mean(classify_windows(params, te) == y) >= 0.90
        assert hist.best_valid_loss == min(hist.valid_loss)
