import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overtake import kernels
from overtake._accel import HAVE_NUMBA, numba_enabled
from overtake.forest import ForestConfig, predict_proba_forest, train_forest
from overtake.svm import SvmConfig, default_gamma, gram, train_svm

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def problem(seed, n=120, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X[:, -1] = np.round(X[:, -1], 1)  # tied values exercise the split scan
    y = (X[:, 0] + 0.6 * rng.normal(size=n) > 0).astype(np.int64)
    return X, y


def test_env_flag(monkeypatch):
    monkeypatch.setenv("OVERTAKE_DISABLE_NUMBA", "1")
    assert not numba_enabled()
    monkeypatch.setenv("OVERTAKE_DISABLE_NUMBA", "0")
    assert numba_enabled() == HAVE_NUMBA


@needs_numba
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), kernel=st.sampled_from(["linear", "rbf"]), C=st.sampled_from([0.1, 1.0, 50.0]))
def test_smo_paths_agree(seed, kernel, C):
    X, y01 = problem(seed)
    y = np.where(y01 > 0, 1.0, -1.0)
    K = gram(X, kernel, default_gamma(X))
    ta, tb = np.zeros(500), np.zeros(500)
    a = kernels.smo_solve(K, y, C, 1e-3, 10**5, ta, use_numba=True)
    b = kernels.smo_solve(K, y, C, 1e-3, 10**5, tb, use_numba=False)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()
    assert a[2:] == b[2:] and ta.tobytes() == tb.tobytes()


@needs_numba
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), mtry=st.integers(1, 4), min_leaf=st.integers(1, 5),
       mode=st.sampled_from([kernels.THRESH_LOWER, kernels.THRESH_MIDPOINT]))
def test_tree_paths_agree(seed, mtry, min_leaf, mode):
    X, y = problem(seed)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(X), len(X))
    keys = rng.random((2 * len(X) - 1, X.shape[1]))
    a = kernels.build_tree(X, y, idx, min_leaf, mtry, keys, mode, use_numba=True)
    b = kernels.build_tree(X, y, idx, min_leaf, mtry, keys, mode, use_numba=False)
    for u, v in zip(a, b):
        assert u.dtype == v.dtype and u.tobytes() == v.tobytes()


@needs_numba
def test_forest_and_svm_end_to_end_agree():
    X, y = problem(1, n=300, d=6)
    fa = train_forest(X, y, ForestConfig(n_trees=20, seed=2), use_numba=True)
    fb = train_forest(X, y, ForestConfig(n_trees=20, seed=2), use_numba=False)
    assert fa.to_json() == fb.to_json()
    Q = np.random.default_rng(0).normal(size=(400, 6))
    assert predict_proba_forest(fa, Q, use_numba=True).tobytes() == \
        predict_proba_forest(fa, Q, use_numba=False).tobytes()
    sa = train_svm(X, y, SvmConfig(seed=1), use_numba=True)
    sb = train_svm(X, y, SvmConfig(seed=1), use_numba=False)
    assert sa.to_json() == sb.to_json()


def test_tree_leaf_counts_partition_rows():
    X, y = problem(3)
    idx = np.arange(len(X))
    keys = np.random.default_rng(0).random((2 * len(X) - 1, X.shape[1]))
    f, thr, lf, rt, val, cnt = kernels.build_tree(X, y, idx, 1, 2, keys)
    leaves = lf < 0
    assert cnt[leaves].sum() == len(X) and cnt[0] == len(X)
    assert np.all(cnt[~leaves] == cnt[lf[~leaves]] + cnt[rt[~leaves]])
