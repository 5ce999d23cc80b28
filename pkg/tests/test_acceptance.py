"""Acceptance criteria, one test each.  Every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also echoed past pytest's capture.
"""

import csv
import io
import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import (
    average_precision_loop,
    confusion_enum,
    f1_grid_loop,
    hard_margin_svm,
    kkt_violation,
    mlp_fd_gradient,
    pr_points_loop,
)
from overtake.cli import main
from overtake.dataset import plan_split
from overtake.features import extract_windows, n_windows, window_matrix, WindowingConfig
from overtake.forest import ForestConfig, predict_proba_forest, train_forest
from overtake.metrics import confusion_at_threshold, f1_from_pr, f1_sweep, pr_curve
from overtake.mlp import MlpModel, mlp_loss_grad
from overtake.signals import ClassLabel, CroppedRecording
from overtake.svm import SvmConfig, gram, solve_dual, to_pm1, train_svm
from overtake.synth import REFERENCE_INVENTORY


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def check(name):
        t0 = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            with capsys.disabled():
                print(f"\nFAIL  {name}  ({time.perf_counter() - t0:.2f} s): {exc}")
            raise
        with capsys.disabled():
            print(f"\nPASS  {name}  ({time.perf_counter() - t0:.2f} s)")
    return check


def test_split_replication(criterion):
    with criterion("split replication (inventory 107/386, 151/55, 6/7 -> 74/38/4 train, 33/113/2 + 312/17/3 test)"):
        t0 = time.perf_counter()
        inv = {t: {0: [f"{t}_0_{i}" for i in range(a)], 1: [f"{t}_1_{i}" for i in range(b)]}
               for t, a, b in REFERENCE_INVENTORY}
        c = plan_split(inv, 0.7, seed=0).counts()
        elapsed = time.perf_counter() - t0
        order = ("truck1", "truck2", "truck3")
        assert [c[t]["train_class0"] for t in order] == [74, 38, 4]
        assert [c[t]["train_class1"] for t in order] == [74, 38, 4]
        assert [c[t]["test_class0"] for t in order] == [33, 113, 2]
        assert [c[t]["test_class1"] for t in order] == [312, 17, 3]
        assert elapsed < 1.0, f"took {elapsed:.3f} s"


@settings(max_examples=500, deadline=None)
@given(N=st.integers(1, 2000), L=st.integers(1, 200), data=st.data())
def _window_count_property(N, L, data):
    H = data.draw(st.integers(1, L))
    expected = (N - L) // H + 1 if N >= L else 0
    enumerated = sum(1 for s in range(0, N, H) if s + L <= N)
    assert n_windows(N, L, H) == expected == enumerated


def test_window_arithmetic(criterion):
    with criterion("window arithmetic (110 frames, 1 s window, 50% overlap -> 21; formula property)"):
        rng = np.random.default_rng(0)
        sig = np.zeros((110, 10))
        sig[:, :7] = rng.random((110, 7))
        crop = CroppedRecording("f", "t", ClassLabel.OVERTAKE, sig)
        assert len(extract_windows(crop)) == 21
        assert n_windows(110, 10, 5) == 21
        _window_count_property()
        for N, L, H in ((37, 7, 3), (50, 50, 1), (64, 8, 8)):
            assert len(window_matrix(rng.random((N, 10)).round(), WindowingConfig(L, H))) == (N - L) // H + 1


def test_f1_consistency(criterion):
    with criterion("F1 consistency (0.9505/0.9247 -> 0.9374; 0.9080/0.9329 -> 0.9203, +-5e-4)"):
        a = f1_from_pr(0.9505, 0.9247)
        b = f1_from_pr(0.9080, 0.9329)
        assert abs(a - 0.9374) <= 5e-4, a
        assert abs(b - 0.9203) <= 5e-4, b


def test_metric_oracle_equivalence(criterion):
    with criterion("metric oracle equivalence (1000 random instances, n <= 200, < 30 s)"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 201))
            s = np.round(rng.random(n), int(rng.integers(1, 4)))
            y = rng.random(n) < rng.uniform(0.05, 0.95)
            y[rng.integers(n)] = True
            y[rng.integers(n)] = not y.all() and y[rng.integers(n)]
            if y.all() or not y.any():
                y[0], y[1] = True, False
            for th in (0.0, 0.25, 0.5, float(s[rng.integers(n)]), 1.0):
                c = confusion_at_threshold(s, y, th)
                assert (c.tp, c.fp, c.tn, c.fn) == confusion_enum(s, y, th)
            curve = pr_curve(s, y)
            pts = pr_points_loop(s, y)
            assert len(pts) == len(curve.thresholds)
            for (th, p, r), th2, p2, r2 in zip(pts, curve.thresholds, curve.precision, curve.recall):
                assert th == th2
                assert abs(p2 - float(p)) <= 1e-12 and abs(r2 - float(r)) <= 1e-12
            assert abs(curve.auc - float(average_precision_loop(s, y))) <= 1e-12
            sw = f1_sweep(s, y)
            th, best = f1_grid_loop(s, y)
            assert best is not None
            assert sw.best_threshold == th and abs(sw.best_f1 - float(best)) <= 1e-12
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"took {elapsed:.1f} s"


def test_mlp_gradient_check(criterion):
    with criterion("MLP gradient check (100 model/batch pairs, central differences, rel err < 1e-4, < 10 s)"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        eps = 1e-5
        worst = 0.0
        done = 0
        while done < 100:
            d, h, n = int(rng.integers(2, 18)), int(rng.integers(1, 11)), int(rng.integers(1, 31))
            W1, b1 = rng.normal(0, 0.7, (h, d)), rng.normal(0, 0.3, h)
            w2, b2 = rng.normal(0, 0.7, h), float(rng.normal(0, 0.3))
            X, y = rng.normal(size=(n, d)), rng.integers(0, 2, n)
            # resample if a unit sits within reach of its ReLU kink
            if np.abs(X @ W1.T + b1).min() < 1e-3:
                continue
            model = MlpModel(W1, b1, w2, b2)
            theta = model.params()
            _, g = mlp_loss_grad(model, X, y)
            ga = g.params()
            num = mlp_fd_gradient(theta, X, y, d, h, eps)
            rel = np.abs(ga - num) / np.maximum(np.maximum(np.abs(ga), np.abs(num)), 1e-8)
            worst = max(worst, float(rel.max()))
            done += 1
        elapsed = time.perf_counter() - t0
        assert worst < 1e-4, f"max relative error {worst:.2e}"
        assert elapsed < 10.0, f"took {elapsed:.1f} s"


def test_svm_optimality(criterion):
    with criterion("SVM optimality (200 separable 2-D points: KKT < 1e-3, |sum a y| < 1e-8, cosine > 0.999)"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(1)
        y = np.repeat([-1.0, 1.0], 100)
        X = rng.normal(size=(200, 2)) + np.where(y[:, None] > 0, [2.0, 2.0], [-2.0, -2.0])
        w0, b0 = hard_margin_svm(X, y)
        assert np.all(y * (X @ w0 + b0) >= 1 - 1e-6), "toy set must be separable"
        C = 1e5
        K = gram(X, "linear")
        sol = solve_dual(K, y, C, 1e-3, 10**7)
        assert sol.converged
        kkt = kkt_violation(sol.alpha, K, y, C)
        assert kkt < 1e-3, f"KKT residual {kkt:.2e}"
        assert abs(sol.alpha @ y) < 1e-8, f"sum alpha y = {sol.alpha @ y:.2e}"
        assert np.all((sol.alpha >= 0) & (sol.alpha <= C))
        model = train_svm(X, y, SvmConfig(kernel="linear", C=C))
        w = model.weight_vector()
        cos = w @ w0 / np.linalg.norm(w) / np.linalg.norm(w0)
        assert cos > 0.999, f"cosine {cos:.6f}"
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"took {elapsed:.1f} s"


def test_rf_rank_invariance(criterion):
    with criterion("RF rank invariance (strictly increasing per-feature transforms, identical predictions)"):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(400, 17))
        y = (X[:, 0] - X[:, 3] + 0.5 * X[:, 8] + 0.5 * rng.normal(size=400) > 0).astype(int)
        Q = rng.normal(scale=1.5, size=(1000, 17))
        fns = [np.exp, np.arctan, lambda v: v ** 3, lambda v: 1e3 * v - 7, lambda v: np.sinh(v) + v,
               lambda v: np.tanh(v / 3)]

        def transform(A):
            return np.column_stack([fns[j % len(fns)](A[:, j]) for j in range(A.shape[1])])

        cfg = ForestConfig(seed=11)
        base = predict_proba_forest(train_forest(X, y, cfg), Q)
        moved = predict_proba_forest(train_forest(transform(X), y, cfg), transform(Q))
        assert np.array_equal(base, moved), f"{np.count_nonzero(base != moved)} predictions differ"


@pytest.fixture(scope="module")
def full_runs(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("run_a"), tmp_path_factory.mktemp("run_b")
    t0 = time.perf_counter()
    code_a = main(["run", "--out", str(a), "--seed", "0"])
    elapsed = time.perf_counter() - t0
    code_b = main(["run", "--out", str(b), "--seed", "0"])
    return a, b, (code_a, code_b), elapsed


def _boxes(path):
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    return {(r["classifier"], float(r["center_offset_s"]), int(r["true_class"])): r for r in rows}


def test_end_to_end_synthetic(criterion, full_runs):
    with criterion("end-to-end synthetic replication (a) AUC@t >= 0.90 (b) fusion >= max-0.01 "
                   "(c) class-1 median rises -9 s -> -1 s (d) AUC@t >= AUC@all, < 5 min"):
        out, _, codes, elapsed = full_runs
        assert codes[0] == 0, f"run exited {codes[0]}"
        doc = json.loads((out / "moment_report.json").read_text())
        rows = doc["classifiers"]
        assert doc["samples"] == {"train": 4872, "test": 10080, "test_files": 480}
        for name in ("ANN", "RF", "SVML", "SVMrbf"):
            assert rows[name]["t"]["auc_pr"] >= 0.90, f"(a) {name} AUC@t {rows[name]['t']['auc_pr']:.4f}"
        for m in doc["moments"]:
            best = max(rows["RF"][m]["auc_pr"], rows["SVML"][m]["auc_pr"])
            assert rows["RF+SVML"][m]["auc_pr"] >= best - 0.01, f"(b) at {m}"
        boxes = _boxes(out / "boxplot_data.csv")
        for name in rows:
            early = float(boxes[(name, -9.0, 1)]["median"])
            late = float(boxes[(name, -1.0, 1)]["median"])
            assert late > early, f"(c) {name}: median {early:.3f} at -9 s vs {late:.3f} at -1 s"
        for name in rows:
            assert rows[name]["t"]["auc_pr"] >= rows[name]["all"]["auc_pr"], f"(d) {name}"
        assert elapsed < 300, f"full run took {elapsed:.0f} s"


def test_determinism(criterion, full_runs):
    with criterion("determinism (two seeded full runs -> byte-identical moment_report.json)"):
        a, b, codes, _ = full_runs
        assert codes == (0, 0)
        assert (a / "moment_report.json").read_bytes() == (b / "moment_report.json").read_bytes()
