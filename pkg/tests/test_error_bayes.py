"""Gaussian naive Bayes on error vectors, checked against loop and product-form oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstm_gauss_nbayes.error_bayes import (
    ErrorDataset,
    GaussNBModel,
    classify,
    evaluate_nb,
    fit_nb,
    joint_log_likelihood,
    posterior_abnormal,
    stratified_split,
)
from lstm_gauss_nbayes.errors import EmptyFeatures, MissingClass, ShapeError
from lstm_gauss_nbayes.lstm import ErrorVector
from oracles import nb_mle, nb_posterior_product, tally


def random_dataset(rng, n=None, d=None):
    n = n or int(rng.integers(4, 51))
    d = d or int(rng.integers(1, 6))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    X = rng.normal(size=(n, d)) + 1.5 * y[:, None]
    return ErrorDataset(X, y)


class TestFit:
    def test_two_point_example(self):
        data = ErrorDataset([[1, 3], [3, 5], [0, 0], [0, 2]], [1, 1, 0, 0])
        m = fit_nb(data)
        assert m.mean.tolist() == [[0, 1], [2, 4]]
        assert m.variance.tolist() == [[1e-9, 1], [1, 1]]
        assert m.prior_abnormal == 0.5

    def test_constant_class_hits_floor(self):
        data = ErrorDataset([[2.0, 2.0], [2.0, 2.0], [0.0, 1.0], [1.0, 0.0]], [1, 1, 0, 0])
        assert fit_nb(data, variance_floor=1e-6).variance[1].tolist() == [1e-6, 1e-6]

    def test_matches_loop_mle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            data = random_dataset(rng)
            m = fit_nb(data)
            prior, mean, var = nb_mle(data.X.tolist(), data.y.tolist(), 1e-9)
            assert m.prior_abnormal == prior
            np.testing.assert_allclose(m.mean, mean, rtol=0, atol=1e-12)
            np.testing.assert_allclose(m.variance, var, rtol=0, atol=1e-12)

    def test_missing_class_and_empty_features(self):
        with pytest.raises(MissingClass):
            fit_nb(ErrorDataset([[1.0], [2.0]], [0, 0]))
        with pytest.raises(EmptyFeatures):
            fit_nb(ErrorDataset(np.zeros((2, 0)), [0, 1]))


class TestLikelihood:
    def test_gaussian_peak(self):
        m = GaussNBModel(0.3, np.zeros((2, 4)), np.ones((2, 4)))
        jll = joint_log_likelihood(m, np.zeros(4), 1, include_prior=False)
        assert jll == pytest.approx(4 * -0.5 * math.log(2 * math.pi), abs=1e-12)
        assert -0.5 * math.log(2 * math.pi) == pytest.approx(-0.918939, abs=1e-6)

    def test_closed_form_delta(self):
        m = GaussNBModel(0.5, [[0.0, 0.0], [1.0, -1.0]], [[1.0, 2.0], [0.5, 3.0]])
        x = np.array([0.4, -0.2])
        y = x.copy()
        y[1] = m.mean[1, 1] + math.sqrt(2) * (x[1] - m.mean[1, 1])  # doubles the squared deviation
        delta = joint_log_likelihood(m, y, 1) - joint_log_likelihood(m, x, 1)
        assert delta == pytest.approx(-((x[1] - m.mean[1, 1]) ** 2) / (2 * 3.0), abs=1e-12)

    def test_product_form_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            data = random_dataset(rng)
            m = fit_nb(data)
            x = rng.normal(size=data.dim)
            post, joint = nb_posterior_product(m.prior_abnormal, m.mean.tolist(), m.variance.tolist(), x.tolist())
            for c in (0, 1):
                if joint[c] > 0:
                    assert math.exp(joint_log_likelihood(m, x, c)) == pytest.approx(joint[c], rel=1e-9)
            assert classify(m, x)[1] == pytest.approx(post, rel=1e-9)

    def test_dimension_mismatch(self):
        m = GaussNBModel(0.5, np.zeros((2, 3)), np.ones((2, 3)))
        with pytest.raises(ShapeError):
            joint_log_likelihood(m, np.zeros(2), 0)


class TestClassify:
    def test_symmetric_tie_goes_abnormal(self):
        m = GaussNBModel(0.5, [[-1.0, 2.0], [1.0, 2.0]], np.ones((2, 2)))
        label, post = classify(m, ErrorVector([0.0, 2.0]))
        assert (label, post) == (1, 0.5)

    def test_dominant_likelihood(self):
        m = GaussNBModel(0.5, [[0.0] * 3, [5.0] * 3], np.ones((2, 3)))
        label, post = classify(m, m.mean[1])
        assert label == 1 and post > 0.99

    def test_long_vectors_stay_in_log_space(self):
        # d = 2000: the product form underflows to 0/0, the log-space posterior does not
        rng = np.random.default_rng(2)
        m = fit_nb(random_dataset(rng, 40, 2000))
        X = rng.normal(size=(5, 2000))
        labels, post = posterior_abnormal(m, X)
        for k in range(5):
            j0, j1 = joint_log_likelihood(m, X[k], 0), joint_log_likelihood(m, X[k], 1)
            assert j0 < -700 and j1 < -700
            shift = -max(j0, j1)
            ref = math.exp(j1 + shift) / (math.exp(j0 + shift) + math.exp(j1 + shift))
            assert post[k] == pytest.approx(ref, rel=1e-9, abs=1e-300)
            assert labels[k] == int(j1 >= j0)
            assert abs(post[k] + (1.0 - post[k]) - 1.0) <= 1e-12

    def test_matches_bayes_oracle_many_cases(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            d = int(rng.integers(1, 5))
            mean = rng.normal(size=(2, d))
            var = rng.uniform(0.2, 2.0, (2, d))
            m = GaussNBModel(float(rng.uniform(0.05, 0.95)), mean, var)
            x = rng.normal(size=d)
            label, post = classify(m, x)
            opost, _ = nb_posterior_product(m.prior_abnormal, mean.tolist(), var.tolist(), x.tolist())
            assert post == pytest.approx(opost, rel=1e-9, abs=1e-300)
            assert label == int(opost >= 0.5)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.permutations(range(4)))
    def test_attribute_permutation(self, seed, perm):
        rng = np.random.default_rng(seed)
        data = random_dataset(rng, 30, 4)
        m = fit_nb(data)
        mp = fit_nb(ErrorDataset(data.X[:, perm], data.y))
        np.testing.assert_array_equal(mp.mean, m.mean[:, perm])
        np.testing.assert_array_equal(mp.variance, m.variance[:, perm])
        X = rng.normal(size=(20, 4))
        np.testing.assert_array_equal(posterior_abnormal(m, X)[0], posterior_abnormal(mp, X[:, perm])[0])

    def test_well_separated_training_accuracy(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            y = rng.integers(0, 2, 500)
            y[:2] = [0, 1]
            X = rng.normal(size=(500, 3)) + 6.0 * y[:, None]
            data = ErrorDataset(X, y)
            labels, _ = posterior_abnormal(fit_nb(data), X)
            assert np.mean(labels == y) >= 0.999


class TestEvaluate:
    def test_separable(self):
        data = ErrorDataset([[0.0], [0.1], [5.0], [5.2]], [0, 0, 1, 1])
        c = evaluate_nb(fit_nb(data), data)
        assert c.fp == c.fn == 0

    def test_swapped_means_invert_labels(self):
        m = GaussNBModel(0.5, [[-1.0], [1.0]], np.ones((2, 1)))
        swapped = GaussNBModel(0.5, [[1.0], [-1.0]], np.ones((2, 1)))
        X = np.array([[-2.0], [-0.5], [0.3], [1.7]])
        assert (posterior_abnormal(m, X)[0] == 1 - posterior_abnormal(swapped, X)[0]).all()

    def test_tally_oracle(self):
        rng = np.random.default_rng(4)
        data = random_dataset(rng, 50, 3)
        m = fit_nb(data)
        test = random_dataset(rng, 40, 3)
        labels = [classify(m, x)[0] for x in test.X]
        c = evaluate_nb(m, test)
        assert (c.tp, c.fp, c.tn, c.fn) == tally(test.y.tolist(), labels)


class TestSplit:
    def test_stratified_and_deterministic(self):
        y = [0] * 50 + [1] * 60
        data = ErrorDataset(np.arange(110.0)[:, None], y, window_ids=np.arange(110) * 3)
        tr, te = stratified_split(data, 0.8, 5)
        assert (np.sum(tr.y == 0), np.sum(tr.y == 1), np.sum(te.y == 0), np.sum(te.y == 1)) == (40, 48, 10, 12)
        assert sorted(tr.window_ids.tolist() + te.window_ids.tolist()) == (np.arange(110) * 3).tolist()
        tr2, _ = stratified_split(data, 0.8, 5)
        assert tr2.window_ids.tolist() == tr.window_ids.tolist()
        assert tr.tag == "E_train" and te.tag == "E_test"

    def test_from_vectors(self):
        vs = [ErrorVector([0.1, 0.2], 0, 7), ErrorVector([0.3, 0.4], 1, 9)]
        data = ErrorDataset.from_vectors(vs)
        assert data.window_ids.tolist() == [7, 9] and data.dim == 2
        with pytest.raises(ShapeError):
            ErrorDataset.from_vectors([ErrorVector([0.1], 0), ErrorVector([0.1, 0.2], 1)])
