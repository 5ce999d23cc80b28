"""Bagged Gini decision trees.

The forest probability for class 1 is the unweighted mean, over trees, of the
class-1 fraction in the leaf a sample lands in.  Trees are stored as flat
node arrays (see :mod:`overtake.kernels`) and converted to nested
:class:`TreeNode` records only for serialisation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._seeding import rng_for
from .errors import EmptyData, InvalidConfig, ModelFormatError

FORMAT_VERSION = 1
_THRESH_MODES = {"lower": kernels.THRESH_LOWER, "midpoint": kernels.THRESH_MIDPOINT}


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    min_leaf: int = 1
    features_per_split: int | None = None  # None -> ceil(sqrt(d))
    seed: int = 0
    bootstrap: bool = True
    # "lower": threshold is the largest left-side training value, which makes
    # the forest invariant to monotone feature transforms.
    threshold_rule: str = "lower"

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidConfig("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise InvalidConfig("min_leaf must be >= 1")
        if self.threshold_rule not in _THRESH_MODES:
            raise InvalidConfig(f"threshold_rule must be one of {sorted(_THRESH_MODES)}")


@dataclass(frozen=True)
class TreeNode:
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    class1_fraction: float | None = None
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True, eq=False)
class ForestModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    offsets: np.ndarray  # root index of each tree in the flat arrays
    n_features: int
    features_per_split: int
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.offsets)

    def tree_slice(self, t: int) -> slice:
        end = self.offsets[t + 1] if t + 1 < self.n_trees else len(self.feature)
        return slice(int(self.offsets[t]), int(end))

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_forest(self, X)

    def tree_predict(self, X, t: int) -> np.ndarray:
        sl = self.tree_slice(t)
        arrays = [a[sl] for a in (self.feature, self.threshold, self.left, self.right, self.value)]
        return kernels.forest_predict(_as_2d(X), *arrays, np.zeros(1, dtype=np.int64))

    def root(self, t: int) -> TreeNode:
        sl = self.tree_slice(t)
        f, th, lf, rt, val, cnt = (a[sl] for a in
                                   (self.feature, self.threshold, self.left, self.right,
                                    self.value, self.count))

        def build(i):
            if lf[i] < 0:
                return TreeNode(class1_fraction=float(val[i]), n_samples=int(cnt[i]))
            return TreeNode(int(f[i]), float(th[i]), build(lf[i]), build(rt[i]),
                            float(val[i]), int(cnt[i]))

        return build(0)

    def to_json(self) -> str:
        trees = []
        for t in range(self.n_trees):
            sl = self.tree_slice(t)
            f, th, lf, rt, val, cnt = (a[sl] for a in
                                       (self.feature, self.threshold, self.left, self.right,
                                        self.value, self.count))

            def node(i):
                rec = {"n": int(cnt[i]), "p1": float(val[i])}
                if lf[i] >= 0:
                    rec.update(f=int(f[i]), thr=float(th[i]), lt=node(lf[i]), rt=node(rt[i]))
                return rec

            trees.append(node(0))
        return json.dumps({"model": "forest", "version": FORMAT_VERSION,
                           "n_features": self.n_features,
                           "features_per_split": self.features_per_split,
                           "seed": self.seed, "trees": trees})

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        doc = json.loads(text)
        if doc.get("model") != "forest" or doc.get("version") != FORMAT_VERSION:
            raise ModelFormatError("not a version-1 forest document")
        cols = {k: [] for k in ("feature", "threshold", "left", "right", "value", "count")}
        offsets = []
        for tree in doc["trees"]:
            base = len(cols["feature"])
            offsets.append(base)
            # breadth-first so children get consecutive ids
            queue = [tree]
            for k in cols:
                cols[k].append(0)
            pos = 0
            while pos < len(queue):
                rec = queue[pos]
                g = base + pos
                cols["value"][g] = rec["p1"]
                cols["count"][g] = rec["n"]
                if "f" in rec:
                    li = len(queue)
                    queue.extend([rec["lt"], rec["rt"]])
                    for k in cols:
                        cols[k].extend([0, 0])
                    cols["feature"][g], cols["threshold"][g] = rec["f"], rec["thr"]
                    cols["left"][g], cols["right"][g] = li, li + 1
                else:
                    cols["feature"][g], cols["threshold"][g] = -1, 0.0
                    cols["left"][g] = cols["right"][g] = -1
                pos += 1
        return cls(np.array(cols["feature"], dtype=np.int64), np.array(cols["threshold"], dtype=np.float64),
                   np.array(cols["left"], dtype=np.int64), np.array(cols["right"], dtype=np.int64),
                   np.array(cols["value"], dtype=np.float64), np.array(cols["count"], dtype=np.int64),
                   np.array(offsets, dtype=np.int64), int(doc["n_features"]),
                   int(doc["features_per_split"]), int(doc["seed"]))


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


def train_forest(X, y, cfg: ForestConfig = ForestConfig(), use_numba=None) -> ForestModel:
    """Fit ``cfg.n_trees`` trees, each on its own seeded bootstrap sample.

    A single-class ``y`` is accepted and yields a constant forest.
    """
    X = _as_2d(X)
    y = np.asarray(y).astype(np.int64).ravel()
    n, d = X.shape
    if n < 2 or len(y) != n:
        raise EmptyData(f"need at least 2 labelled rows, got X {X.shape}, y {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise InvalidConfig("labels must be 0/1")
    mtry = cfg.features_per_split or math.ceil(math.sqrt(d))
    if not 1 <= mtry <= d:
        raise InvalidConfig(f"features_per_split must lie in [1, {d}]")
    mode = _THRESH_MODES[cfg.threshold_rule]
    parts = []
    for t in range(cfg.n_trees):
        rng = rng_for(cfg.seed, "tree", t)
        idx = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        keys = rng.random((2 * n - 1, d))
        parts.append(kernels.build_tree(X, y, idx, cfg.min_leaf, mtry, keys, mode, use_numba))
    sizes = [len(p[0]) for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    cat = [np.concatenate([p[k] for p in parts]) for k in range(6)]
    return ForestModel(*cat, offsets, d, mtry, cfg.seed)


def predict_proba_forest(model: ForestModel, X, use_numba=None) -> np.ndarray:
    """Class-1 probability for each row of ``X`` (unstandardised features)."""
    X = _as_2d(X)
    return kernels.forest_predict(X, model.feature, model.threshold, model.left, model.right,
                                  model.value, model.offsets, use_numba)
