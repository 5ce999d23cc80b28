"""One-hidden-layer perceptron: ReLU hidden units, sigmoid output, mean
binary cross-entropy, trained full-batch by L-BFGS with Armijo backtracking.

The model is small and the batch matmuls are BLAS-bound, so this module has
no numba path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._seeding import rng_for
from .errors import InvalidConfig, ModelFormatError, NonFinite, SingleClass

FORMAT_VERSION = 1
_P_LO = np.finfo(np.float64).tiny
_P_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class MlpConfig:
    hidden_units: int = 10
    max_iterations: int = 1_000_000
    grad_tol: float = 1e-6
    # stop when an accepted step lowers the loss by less than this (relative)
    loss_tol: float = 1e-10
    history: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if self.hidden_units < 1:
            raise InvalidConfig("hidden_units must be >= 1")


@dataclass(frozen=True, eq=False)
class MlpModel:
    W1: np.ndarray  # (hidden, d)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    activation: str = "relu"
    n_iter: int = 0
    converged: bool = True
    stop_reason: str = ""
    loss_history: tuple = field(default=(), repr=False)

    @property
    def n_features(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_units(self) -> int:
        return self.W1.shape[0]

    def params(self) -> np.ndarray:
        return pack(self.W1, self.b1, self.w2, self.b2)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_mlp(self, X)

    def to_json(self) -> str:
        return json.dumps({"model": "mlp", "version": FORMAT_VERSION, "activation": self.activation,
                           "n_features": self.n_features, "hidden_units": self.hidden_units,
                           "params": self.params().tolist(), "n_iter": self.n_iter,
                           "converged": self.converged, "stop_reason": self.stop_reason})

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        doc = json.loads(text)
        if doc.get("model") != "mlp" or doc.get("version") != FORMAT_VERSION:
            raise ModelFormatError("not a version-1 mlp document")
        W1, b1, w2, b2 = unpack(np.asarray(doc["params"], dtype=np.float64),
                                doc["n_features"], doc["hidden_units"])
        return cls(W1, b1, w2, b2, doc["activation"], doc["n_iter"], doc["converged"],
                   doc["stop_reason"])


def pack(W1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([np.ravel(W1), np.ravel(b1), np.ravel(w2), [float(b2)]])


def unpack(theta, d: int, h: int):
    theta = np.asarray(theta, dtype=np.float64)
    W1 = theta[: h * d].reshape(h, d)
    b1 = theta[h * d: h * d + h]
    w2 = theta[h * d + h: h * d + 2 * h]
    return W1, b1, w2, float(theta[-1])


def _softplus(z):
    return np.logaddexp(0.0, z)


def _loss_grad_theta(theta, X, y, h):
    n, d = X.shape
    W1, b1, w2, b2 = unpack(theta, d, h)
    A = X @ W1.T + b1
    H = np.maximum(A, 0.0)
    z = H @ w2 + b2
    loss = float(np.mean(_softplus(z) - y * z))
    dz = (expit(z) - y) / n
    gw2 = H.T @ dz
    gb2 = dz.sum()
    dA = np.outer(dz, w2) * (A > 0)
    gW1 = dA.T @ X
    gb1 = dA.sum(axis=0)
    return loss, pack(gW1, gb1, gw2, gb2)


def mlp_loss_grad(model: MlpModel, X, y):
    """Mean cross-entropy and its exact gradient as an :class:`MlpModel` of partials."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    loss, g = _loss_grad_theta(model.params(), X, y, model.hidden_units)
    gW1, gb1, gw2, gb2 = unpack(g, model.n_features, model.hidden_units)
    return loss, MlpModel(gW1, gb1, gw2, gb2, model.activation)


def init_mlp(d: int, cfg: MlpConfig = MlpConfig()) -> MlpModel:
    rng = rng_for(cfg.seed, "mlp-init")
    h = cfg.hidden_units
    lim1 = math.sqrt(6.0 / (d + h))
    lim2 = math.sqrt(6.0 / (h + 1))
    return MlpModel(rng.uniform(-lim1, lim1, size=(h, d)), np.zeros(h),
                    rng.uniform(-lim2, lim2, size=h), 0.0)


def _lbfgs_direction(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, yv in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / yv.dot(s)
        a = rho * s.dot(q)
        alphas.append((rho, a))
        q -= a * yv
    if s_hist:
        q *= s_hist[-1].dot(y_hist[-1]) / y_hist[-1].dot(y_hist[-1])
    for (s, yv), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * yv.dot(q)
        q += (a - b) * s
    return -q


def train_mlp(X, y, cfg: MlpConfig = MlpConfig()) -> MlpModel:
    """Fit on standardised ``X`` and 0/1 labels ``y``.

    Every accepted step satisfies the Armijo condition, so the training loss
    is non-increasing.  Stops on gradient norm below ``grad_tol``, relative
    loss decrease below ``loss_tol``, a failed line search, or
    ``max_iterations``; only the last counts as non-converged.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise InvalidConfig(f"bad training shapes X {X.shape}, y {y.shape}")
    if not np.isfinite(X).all():
        raise NonFinite("training features contain non-finite values")
    if len(np.unique(y)) < 2:
        raise SingleClass("MLP training needs both classes")
    h = cfg.hidden_units
    theta = init_mlp(X.shape[1], cfg).params()
    f, g = _loss_grad_theta(theta, X, y, h)
    s_hist: list = []
    y_hist: list = []
    history = [f]
    reason, converged, it = "max_iterations", False, 0
    c1 = 1e-4
    while it < cfg.max_iterations:
        if not (math.isfinite(f) and np.isfinite(g).all()):
            raise NonFinite(f"loss/gradient became non-finite at iteration {it}")
        if np.linalg.norm(g) < cfg.grad_tol:
            reason, converged = "grad_tol", True
            break
        p = _lbfgs_direction(g, s_hist, y_hist)
        slope = g.dot(p)
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            p = -g
            slope = g.dot(p)
        step = 1.0 if s_hist else min(1.0, 1.0 / np.linalg.norm(g))
        accepted = False
        for _ in range(60):
            cand = theta + step * p
            f_new, g_new = _loss_grad_theta(cand, X, y, h)
            if math.isfinite(f_new) and f_new <= f + c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        it += 1
        if not accepted:
            reason, converged = "line_search", True
            break
        s, yv = cand - theta, g_new - g
        if s.dot(yv) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > cfg.history:
                s_hist.pop(0)
                y_hist.pop(0)
        decrease = f - f_new
        theta, f, g = cand, f_new, g_new
        history.append(f)
        if decrease <= cfg.loss_tol * max(abs(f), 1.0):
            reason, converged = "loss_tol", True
            break
    W1, b1, w2, b2 = unpack(theta, X.shape[1], h)
    return MlpModel(W1, b1, w2, b2, "relu", it, converged, reason, tuple(history))


def predict_proba_mlp(model: MlpModel, X) -> np.ndarray:
    """Class-1 probability; ``X`` must be standardised like the training data."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = X[None, :] if single else X
    if not np.isfinite(X).all():
        raise NonFinite("input features contain non-finite values")
    z = np.maximum(X @ model.W1.T + model.b1, 0.0) @ model.w2 + model.b2
    p = np.clip(expit(z), _P_LO, _P_HI)
    return p[0] if single else p
