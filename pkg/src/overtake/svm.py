"""Soft-margin binary SVM (linear / RBF) with Platt-calibrated probabilities.

Training solves the dual with the SMO kernel in :mod:`overtake.kernels` on a
precomputed kernel matrix.  Probabilities come from a sigmoid fitted to
out-of-fold decision values, so calibration never sees margins of points the
scoring model was trained on.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import kernels
from ._seeding import rng_for
from .errors import InvalidConfig, ModelFormatError, SingleClass

FORMAT_VERSION = 1
DEFAULT_MAX_ITER = {"linear": 1_000_000, "rbf": 100_000_000}
_PREDICT_CHUNK = 2048


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmConfig:
    kernel: str = "linear"
    C: float = 1.0
    gamma: float | None = None  # None -> 1 / (d * var(X))
    tol: float = 1e-3
    max_iterations: int | None = None  # None -> per-kernel default
    calibration_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in DEFAULT_MAX_ITER:
            raise InvalidConfig(f"kernel must be 'linear' or 'rbf', got {self.kernel!r}")
        if not self.C > 0:
            raise InvalidConfig("C must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise InvalidConfig("gamma must be positive")
        if self.calibration_folds < 2:
            raise InvalidConfig("calibration_folds must be >= 2")

    @property
    def iteration_limit(self) -> int:
        return self.max_iterations if self.max_iterations is not None else DEFAULT_MAX_ITER[self.kernel]


def kernel_matrix(A, B, kernel: str, gamma: float = 1.0) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    G = A @ B.T
    if kernel == "linear":
        return G
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * G
    return np.exp(-gamma * np.maximum(sq, 0.0))


def gram(X, kernel: str, gamma: float = 1.0) -> np.ndarray:
    """Exactly symmetric training kernel matrix."""
    K = kernel_matrix(X, X, kernel, gamma)
    K = 0.5 * (K + K.T)
    if kernel == "rbf":
        np.fill_diagonal(K, 1.0)
    return K


def default_gamma(X) -> float:
    X = np.asarray(X, dtype=np.float64)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def to_pm1(y) -> np.ndarray:
    y = np.asarray(y).ravel()
    vals = set(np.unique(y).tolist())
    if vals <= {0, 1}:
        return np.where(y > 0, 1.0, -1.0)
    if vals <= {-1, 1}:
        return y.astype(np.float64)
    raise InvalidConfig(f"labels must be 0/1 or -1/+1, got {sorted(vals)}")


@dataclass(frozen=True, eq=False)
class DualSolution:
    alpha: np.ndarray
    gradient: np.ndarray
    b: float
    n_iter: int
    converged: bool


def bias_from_gradient(alpha, G, y, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yG[free].mean()
    else:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        ub_mask = ((y > 0) & at_lower) | ((y < 0) & at_upper)
        lb_mask = ((y > 0) & at_upper) | ((y < 0) & at_lower)
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return -float(rho)


def solve_dual(K, y, C: float, tol: float, max_iter: int, trace=None, use_numba=None) -> DualSolution:
    alpha, G, it, conv = kernels.smo_solve(K, y, C, tol, max_iter, trace, use_numba)
    return DualSolution(alpha, G, bias_from_gradient(alpha, G, y, C), it, conv)


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: str
    gamma: float
    C: float
    support_vectors: np.ndarray
    coef: np.ndarray  # alpha_i * y_i for each support vector
    b: float
    platt_A: float = -1.0
    platt_B: float = 0.0
    n_iter: int = 0
    converged: bool = True

    def decision_value(self, X) -> np.ndarray:
        return decision_value(self, X)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_svm(self, X)

    def weight_vector(self) -> np.ndarray:
        if self.kernel != "linear":
            raise InvalidConfig("primal weights exist only for the linear kernel")
        return self.coef @ self.support_vectors

    def to_json(self) -> str:
        return json.dumps({"model": "svm", "version": FORMAT_VERSION, "kernel": self.kernel,
                           "gamma": self.gamma, "C": self.C,
                           "support_vectors": self.support_vectors.tolist(),
                           "coef": self.coef.tolist(), "b": self.b,
                           "platt": {"A": self.platt_A, "B": self.platt_B},
                           "n_iter": self.n_iter, "converged": self.converged})

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        doc = json.loads(text)
        if doc.get("model") != "svm" or doc.get("version") != FORMAT_VERSION:
            raise ModelFormatError("not a version-1 svm document")
        d = len(doc["support_vectors"][0]) if doc["support_vectors"] else 0
        sv = np.asarray(doc["support_vectors"], dtype=np.float64).reshape(-1, d)
        return cls(doc["kernel"], doc["gamma"], doc["C"], sv,
                   np.asarray(doc["coef"], dtype=np.float64), doc["b"],
                   doc["platt"]["A"], doc["platt"]["B"], doc["n_iter"], doc["converged"])


def _fit_raw(X, y, cfg: SvmConfig, gamma: float, use_numba=None):
    K = gram(X, cfg.kernel, gamma)
    sol = solve_dual(K, y, cfg.C, cfg.tol, cfg.iteration_limit, use_numba=use_numba)
    sv = sol.alpha > 0
    return SvmModel(cfg.kernel, gamma, cfg.C, X[sv].copy(), (sol.alpha * y)[sv], sol.b,
                    n_iter=sol.n_iter, converged=sol.converged)


def _stratified_folds(y, k: int, rng) -> np.ndarray:
    fold = np.empty(len(y), dtype=np.int64)
    for cls in (-1.0, 1.0):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(len(members))]
        fold[members] = np.arange(len(members)) % k
    return fold


def train_svm(X, y, cfg: SvmConfig = SvmConfig(), use_numba=None) -> SvmModel:
    """Fit the SVM on standardised ``X``; labels may be 0/1 or -1/+1.

    If SMO hits the iteration limit the last iterate is returned with
    ``converged=False`` and a :class:`ConvergenceWarning` is issued.
    """
    X = np.asarray(X, dtype=np.float64)
    y = to_pm1(y)
    if len(np.unique(y)) < 2:
        raise SingleClass("SVM training needs both classes")
    gamma = cfg.gamma if cfg.gamma is not None else default_gamma(X)
    model = _fit_raw(X, y, cfg, gamma, use_numba)
    converged = model.converged

    folds = _stratified_folds(y, cfg.calibration_folds, rng_for(cfg.seed, "svm-folds"))
    oof = np.zeros(len(y))
    usable = np.zeros(len(y), dtype=bool)
    for f in range(cfg.calibration_folds):
        tr, te = folds != f, folds == f
        if len(np.unique(y[tr])) < 2 or not te.any():
            continue
        sub = _fit_raw(X[tr], y[tr], cfg, gamma, use_numba)
        converged &= sub.converged
        oof[te] = decision_value(sub, X[te])
        usable[te] = True
    A, B = fit_platt(oof[usable], y[usable] > 0)
    if not converged:
        warnings.warn(f"SMO ({cfg.kernel}) hit the iteration limit {cfg.iteration_limit}",
                      ConvergenceWarning, stacklevel=2)
    return SvmModel(model.kernel, gamma, cfg.C, model.support_vectors, model.coef, model.b,
                    A, B, model.n_iter, bool(converged))


def decision_value(model: SvmModel, X) -> np.ndarray:
    """Raw margin ``sum_i alpha_i y_i K(x_i, x) + b``."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = X[None, :] if single else X
    out = np.empty(len(X))
    for lo in range(0, len(X), _PREDICT_CHUNK):
        blk = X[lo:lo + _PREDICT_CHUNK]
        out[lo:lo + len(blk)] = kernel_matrix(blk, model.support_vectors, model.kernel,
                                              model.gamma) @ model.coef + model.b
    return out[0] if single else out


def platt_proba(f, A: float, B: float):
    return expit(-(A * np.asarray(f, dtype=np.float64) + B))


def fit_platt(f, labels, max_iter: int = 100) -> tuple[float, float]:
    """Fit ``P(y=1|f) = 1 / (1 + exp(A f + B))`` by regularised-target Newton.

    Follows the Newton/backtracking scheme of Lin, Lin & Weng's note on
    Platt's method.  Falls back to ``(-1, 0)`` when a class is missing.
    """
    f = np.asarray(f, dtype=np.float64).ravel()
    pos = np.asarray(labels).ravel().astype(bool)
    n1 = int(pos.sum())
    n0 = len(pos) - n1
    if n1 == 0 or n0 == 0:
        return -1.0, 0.0
    hi, lo = (n1 + 1.0) / (n1 + 2.0), 1.0 / (n0 + 2.0)
    t = np.where(pos, hi, lo)
    A, B = 0.0, math.log((n0 + 1.0) / (n1 + 1.0))

    def objective(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                                     (t - 1.0) * z + np.log1p(np.exp(-np.abs(z))))))

    fval = objective(A, B)
    sigma = 1e-12
    for _ in range(max_iter):
        p = expit(-(f * A + B))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    return float(A), float(B)


def predict_proba_svm(model: SvmModel, X) -> np.ndarray:
    return platt_proba(decision_value(model, X), model.platt_A, model.platt_B)
