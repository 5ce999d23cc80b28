import math

import numpy as np
import pytest

from oracles import logistic_regression, mlp_fd_gradient, mlp_loss_extended
from overtake.errors import ModelFormatError, NonFinite, SingleClass
from overtake.mlp import MlpConfig, MlpModel, init_mlp, mlp_loss_grad, predict_proba_mlp, train_mlp


def zero_model(d=17, h=10):
    return MlpModel(np.zeros((h, d)), np.zeros(h), np.zeros(h), 0.0)


def blobs(n=200, margin=2.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, 2)) * 0.5
    X[:, 0] += np.where(y == 1, 1, -1) * (margin / 2 + 1.5)
    return X, y


def fd_check(model, X, y, eps=1e-5):
    """Max relative error of the analytic gradient against central differences."""
    _, g = mlp_loss_grad(model, X, y)
    ga = g.params()
    num = mlp_fd_gradient(model.params(), X, y, model.n_features, model.hidden_units, eps)
    return np.max(np.abs(ga - num) / np.maximum(np.maximum(np.abs(ga), np.abs(num)), 1e-8))


def test_zero_model_half():
    X = np.random.default_rng(0).normal(size=(5, 17))
    assert np.all(predict_proba_mlp(zero_model(), X) == 0.5)
    loss, _ = mlp_loss_grad(zero_model(), X[:4], np.array([0, 1, 0, 1]))
    assert loss == pytest.approx(math.log(2), rel=1e-15)


def test_loss_matches_extended_precision():
    rng = np.random.default_rng(3)
    m = init_mlp(17, MlpConfig(seed=2))
    X, y = rng.normal(size=(60, 17)), rng.integers(0, 2, 60)
    ref = mlp_loss_extended(m.W1, m.b1, m.w2, m.b2, X, y)
    assert mlp_loss_grad(m, X, y)[0] == pytest.approx(float(ref), rel=1e-13)


def test_gradient_finite_differences():
    rng = np.random.default_rng(1)
    m = init_mlp(6, MlpConfig(hidden_units=4, seed=3))
    m = MlpModel(m.W1, rng.normal(size=4) * 0.1, m.w2, 0.2)
    X = rng.normal(size=(30, 6))
    y = rng.integers(0, 2, 30)
    assert fd_check(m, X, y) < 1e-4


def test_duplicated_rows_same_loss_and_grad():
    rng = np.random.default_rng(2)
    m = init_mlp(17, MlpConfig(seed=1))
    X, y = rng.normal(size=(40, 17)), rng.integers(0, 2, 40)
    l1, g1 = mlp_loss_grad(m, X, y)
    l2, g2 = mlp_loss_grad(m, np.vstack([X, X]), np.r_[y, y])
    assert l1 == pytest.approx(l2, rel=1e-13)
    np.testing.assert_allclose(g1.params(), g2.params(), rtol=1e-11, atol=1e-15)


def test_separable_blobs():
    X, y = blobs()
    w = logistic_regression(X, y)
    assert np.mean(((X @ w[:-1] + w[-1]) > 0) == y) == 1.0  # oracle: the data is separable
    m = train_mlp(X, y, MlpConfig(seed=0))
    p = predict_proba_mlp(m, X)
    assert np.mean((p >= 0.5) == y) == 1.0
    assert predict_proba_mlp(m, X[y == 1].mean(axis=0)) > 0.9
    assert m.converged


def test_loss_non_increasing_and_deterministic():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(150, 17))
    y = (X[:, 0] + 0.5 * rng.normal(size=150) > 0).astype(int)
    cfg = MlpConfig(seed=11, max_iterations=300)
    a, b = train_mlp(X, y, cfg), train_mlp(X, y, cfg)
    assert np.all(np.diff(a.loss_history) <= 0)
    assert a.params().tobytes() == b.params().tobytes()
    c = train_mlp(X, y, MlpConfig(seed=12, max_iterations=300))
    assert c.params().tobytes() != a.params().tobytes()


def test_max_iterations_flags_nonconverged():
    X, y = blobs(seed=2)
    m = train_mlp(X, y, MlpConfig(max_iterations=2, grad_tol=0.0, loss_tol=0.0))
    assert not m.converged and m.stop_reason == "max_iterations" and m.n_iter == 2


def test_errors():
    X, y = blobs()
    with pytest.raises(SingleClass):
        train_mlp(X, np.ones(len(X)))
    bad = X.copy()
    bad[0, 0] = np.inf
    with pytest.raises(NonFinite):
        train_mlp(bad, y)
    with pytest.raises(NonFinite):
        predict_proba_mlp(zero_model(2), np.array([np.nan, 0.0]))


def test_probabilities_in_open_interval():
    m = MlpModel(np.full((3, 2), 50.0), np.zeros(3), np.full(3, 50.0), 0.0)
    p = predict_proba_mlp(m, np.array([[100.0, 100.0], [-100.0, -100.0], [0.0, 0.0]]))
    assert np.all((p > 0) & (p < 1))
    assert np.all((1 - p) + p == 1)


def test_json_round_trip():
    X, y = blobs()
    m = train_mlp(X, y, MlpConfig(max_iterations=20))
    back = MlpModel.from_json(m.to_json())
    assert back.params().tobytes() == m.params().tobytes()
    assert np.array_equal(predict_proba_mlp(back, X), predict_proba_mlp(m, X))
    with pytest.raises(ModelFormatError):
        MlpModel.from_json('{"model": "rf"}')
