"""Time the numba kernels against their numpy twins on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 3]

Sizes match a default experiment: 4872 training windows x 17 features.  The
first numba call (JIT compile or cache load) is excluded from the timings.
Outputs of the two paths are checked for bitwise equality before timing.
"""

import argparse
import time

import numpy as np

from overtake import kernels
from overtake._accel import HAVE_NUMBA
from overtake.forest import ForestConfig, train_forest
from overtake.svm import gram


def workload(seed=0, n=4872, d=17):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + 0.8 * X[:, 1] - 0.5 * X[:, 2] + rng.normal(size=n) > 0).astype(np.int64)
    return X, y


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--smo-size", type=int, default=1500,
                    help="rows for the SMO case (the kernel matrix is n x n)")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    X, y = workload()
    pm = np.where(y[: args.smo_size] > 0, 1.0, -1.0)
    K = gram(X[: args.smo_size], "linear")
    rng = np.random.default_rng(1)
    idx = rng.integers(0, len(X), len(X))
    keys = rng.random((2 * len(X) - 1, X.shape[1]))
    forest = train_forest(X, y, ForestConfig(n_trees=100, seed=0))
    Q = workload(seed=2, n=10080)[0]
    arrays = (forest.feature, forest.threshold, forest.left, forest.right, forest.value, forest.offsets)

    cases = {
        f"smo  linear n={args.smo_size}":
            lambda nb: kernels.smo_solve(K, pm, 1.0, 1e-3, 10**6, use_numba=nb)[:2],
        f"tree build n={len(X)} mtry=5":
            lambda nb: kernels.build_tree(X, y, idx, 1, 5, keys, use_numba=nb),
        f"forest predict 100 trees x {len(Q)} rows":
            lambda nb: (kernels.forest_predict(Q, *arrays, use_numba=nb),),
    }
    print(f"{'kernel':<42}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, fn in cases.items():
        warm = fn(True)
        ref = fn(False)
        same = all(np.asarray(a).tobytes() == np.asarray(b).tobytes() for a, b in zip(warm, ref))
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        flag = "" if same else "  OUTPUTS DIFFER"
        print(f"{name:<42}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x{flag}")


if __name__ == "__main__":
    main()
