"""Hot inner loops: SMO dual solver, tree induction and forest traversal.

Each kernel exists twice: a numba-compiled loop (``*_numba``) and a
vectorised numpy version (``*_numpy``) that performs the same floating-point
operations in the same order, so the two agree bit for bit.  The public
wrappers dispatch on :func:`overtake._accel.numba_enabled`.
"""

from __future__ import annotations

import numpy as np

from ._accel import njit, numba_enabled

TAU = 1e-12  # floor on the SMO curvature term

THRESH_LOWER = 0
THRESH_MIDPOINT = 1


# --------------------------------------------------------------------------
# SMO with maximal-violating-pair selection.
#
# Solves  min_a 0.5 a'Qa - e'a  s.t. y'a = 0, 0 <= a <= C,  Q_ij = y_i y_j K_ij,
# keeping the gradient G = Qa - e.  ``trace`` (possibly length 0) receives the
# dual-objective increase of the first len(trace) steps.


@njit
def smo_numba(K, y, C, tol, max_iter, trace):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    n_trace = trace.shape[0]
    it = 0
    converged = False
    while it < max_iter:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = TAU
        step = (gmax - gmin) / quad
        bi = C - alpha[i] if y[i] > 0 else alpha[i]
        bj = alpha[j] if y[j] > 0 else C - alpha[j]
        clip_i = False
        clip_j = False
        if step >= bi:
            step = bi
            clip_i = True
        if step >= bj:
            step = bj
            clip_j = True
            clip_i = clip_i and bi == bj
        if clip_i:
            alpha[i] = C if y[i] > 0 else 0.0
        else:
            alpha[i] = alpha[i] + y[i] * step
        if clip_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        else:
            alpha[j] = alpha[j] - y[j] * step
        Ki = K[i]
        Kj = K[j]
        for k in range(n):
            G[k] += y[k] * step * (Ki[k] - Kj[k])
        if it < n_trace:
            trace[it] = step * (gmax - gmin) - 0.5 * step * step * quad
        it += 1
    return alpha, G, it, converged


def smo_numpy(K, y, C, tol, max_iter, trace):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    n_trace = trace.shape[0]
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        v = -y * G
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        gmax, gmin = v[i], v[j]
        if gmax - gmin < tol:
            converged = True
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = TAU
        step = (gmax - gmin) / quad
        bi = C - alpha[i] if y[i] > 0 else alpha[i]
        bj = alpha[j] if y[j] > 0 else C - alpha[j]
        clip_i = clip_j = False
        if step >= bi:
            step, clip_i = bi, True
        if step >= bj:
            step, clip_j = bj, True
            clip_i = clip_i and bi == bj
        alpha[i] = (C if y[i] > 0 else 0.0) if clip_i else alpha[i] + y[i] * step
        alpha[j] = (0.0 if y[j] > 0 else C) if clip_j else alpha[j] - y[j] * step
        G += y * step * (K[i] - K[j])
        if it < n_trace:
            trace[it] = step * (gmax - gmin) - 0.5 * step * step * quad
        it += 1
    return alpha, G, it, converged


def smo_solve(K, y, C, tol, max_iter, trace=None, use_numba=None):
    """Run SMO on a precomputed symmetric kernel matrix.

    Returns ``(alpha, gradient, n_iter, converged)``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    trace = np.zeros(0) if trace is None else trace
    if use_numba is None:
        use_numba = numba_enabled()
    fn = smo_numba if use_numba else smo_numpy
    alpha, G, it, conv = fn(K, y, float(C), float(tol), int(max_iter), trace)
    return alpha, G, int(it), bool(conv)


# --------------------------------------------------------------------------
# Tree induction (Gini, depth-first, explicit stack).
#
# Node ids are assigned at creation; children of node m get the next two ids.
# The candidate-feature order at node m is argsort(feat_keys[m]); the first
# ``mtry`` are examined, and further ones only while no valid split exists.
# Maximising  (l1^2 + l0^2)/nl + (r1^2 + r0^2)/nr  is minimising the weighted
# child Gini impurity.


@njit
def build_tree_numba(X, y, idx, min_leaf, mtry, feat_keys, thresh_mode):
    n = idx.shape[0]
    d = X.shape[1]
    cap = 2 * n - 1 if n > 0 else 1
    feature = -np.ones(cap, dtype=np.int64)
    threshold = np.zeros(cap)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    work = idx.copy()
    buf = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    labs = np.empty(n)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        nid = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        m = hi - lo
        n1 = 0
        for t in range(lo, hi):
            n1 += y[work[t]]
        count[nid] = m
        value[nid] = n1 / m if m > 0 else 0.0
        if n1 == 0 or n1 == m or m < 2 * min_leaf:
            continue
        order = np.argsort(feat_keys[nid])
        best = -1.0
        best_f = -1
        best_thr = 0.0
        mf = float(m)
        for r in range(d):
            if r >= mtry and best_f >= 0:
                break
            f = order[r]
            for t in range(m):
                vals[t] = X[work[lo + t], f]
            srt = np.argsort(vals[:m])
            for t in range(m):
                labs[t] = y[work[lo + srt[t]]]
            l1 = 0.0
            tot1 = float(n1)
            for p in range(1, m):
                l1 += labs[p - 1]
                if p < min_leaf or m - p < min_leaf:
                    continue
                a = vals[srt[p - 1]]
                b = vals[srt[p]]
                if not a < b:
                    continue
                pf = float(p)
                l0 = pf - l1
                r1 = tot1 - l1
                r0 = (mf - pf) - r1
                score = (l1 * l1 + l0 * l0) / pf + (r1 * r1 + r0 * r0) / (mf - pf)
                if score > best:
                    best = score
                    best_f = f
                    if thresh_mode == 1:
                        thr = (a + b) / 2.0
                        if not thr < b:
                            thr = a
                        best_thr = thr
                    else:
                        best_thr = a
        if best_f < 0:
            continue
        nl = 0
        for t in range(lo, hi):
            if X[work[t], best_f] <= best_thr:
                buf[nl] = work[t]
                nl += 1
        k = nl
        for t in range(lo, hi):
            if not X[work[t], best_f] <= best_thr:
                buf[k] = work[t]
                k += 1
        for t in range(m):
            work[lo + t] = buf[t]
        feature[nid] = best_f
        threshold[nid] = best_thr
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[nid] = li
        right[nid] = ri
        st_node[sp] = ri
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        sp += 1
        st_node[sp] = li
        st_lo[sp] = lo
        st_hi[sp] = lo + nl
        sp += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes])


def _best_split_numpy(vals, labs, n1, min_leaf):
    m = vals.shape[0]
    srt = np.argsort(vals, kind="stable")
    sv = vals[srt]
    l1 = np.cumsum(labs[srt].astype(np.float64))[:-1]
    pf = np.arange(1, m, dtype=np.float64)
    mf = float(m)
    l0 = pf - l1
    r1 = float(n1) - l1
    r0 = (mf - pf) - r1
    valid = (sv[:-1] < sv[1:]) & (pf >= min_leaf) & (mf - pf >= min_leaf)
    if not valid.any():
        return -1.0, -1, 0.0, 0.0
    score = (l1 * l1 + l0 * l0) / pf + (r1 * r1 + r0 * r0) / (mf - pf)
    score = np.where(valid, score, -np.inf)
    p = int(np.argmax(score))
    return score[p], p, sv[p], sv[p + 1]


def build_tree_numpy(X, y, idx, min_leaf, mtry, feat_keys, thresh_mode):
    n = idx.shape[0]
    d = X.shape[1]
    cap = 2 * n - 1 if n > 0 else 1
    feature = -np.ones(cap, dtype=np.int64)
    threshold = np.zeros(cap)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    work = idx.copy()
    stack = [(0, 0, n)]
    n_nodes = 1
    while stack:
        nid, lo, hi = stack.pop()
        m = hi - lo
        rows = work[lo:hi]
        yl = y[rows]
        n1 = int(yl.sum())
        count[nid] = m
        value[nid] = n1 / m if m > 0 else 0.0
        if n1 == 0 or n1 == m or m < 2 * min_leaf:
            continue
        order = np.argsort(feat_keys[nid])
        best, best_f, best_thr = -1.0, -1, 0.0
        for r in range(d):
            if r >= mtry and best_f >= 0:
                break
            f = int(order[r])
            score, p, a, b = _best_split_numpy(X[rows, f], yl, n1, min_leaf)
            if p >= 0 and score > best:
                best, best_f = score, f
                if thresh_mode == THRESH_MIDPOINT:
                    thr = (a + b) / 2.0
                    best_thr = thr if thr < b else a
                else:
                    best_thr = a
        if best_f < 0:
            continue
        go_left = X[rows, best_f] <= best_thr
        nl = int(go_left.sum())
        work[lo:hi] = np.concatenate([rows[go_left], rows[~go_left]])
        feature[nid], threshold[nid] = best_f, best_thr
        li, ri = n_nodes, n_nodes + 1
        n_nodes += 2
        left[nid], right[nid] = li, ri
        stack.append((ri, lo + nl, hi))
        stack.append((li, lo, lo + nl))
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes])


def build_tree(X, y, idx, min_leaf, mtry, feat_keys, thresh_mode=THRESH_LOWER, use_numba=None):
    """Grow one tree on rows ``idx`` of ``X``.

    Returns node arrays ``(feature, threshold, left, right, value, count)``;
    leaves have ``feature == -1``.  Rows with ``x[feature] <= threshold`` go
    left.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    feat_keys = np.ascontiguousarray(feat_keys, dtype=np.float64)
    if use_numba is None:
        use_numba = numba_enabled()
    fn = build_tree_numba if use_numba else build_tree_numpy
    return fn(X, y, idx, int(min_leaf), int(mtry), feat_keys, int(thresh_mode))


# --------------------------------------------------------------------------
# Forest traversal over flat node arrays; ``offsets[t]`` is tree t's root.


@njit
def forest_predict_numba(X, feature, threshold, left, right, value, offsets):
    n = X.shape[0]
    T = offsets.shape[0]
    acc = np.zeros(n)
    # tree-major keeps one tree's nodes hot; per-row summation order matches numpy
    for t in range(T):
        base = offsets[t]
        for r in range(n):
            node = 0
            while left[base + node] >= 0:
                if X[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc[r] += value[base + node]
    return acc / T


def forest_predict_numpy(X, feature, threshold, left, right, value, offsets):
    n = X.shape[0]
    T = offsets.shape[0]
    acc = np.zeros(n)
    rows = np.arange(n)
    for t in range(T):
        base = offsets[t]
        node = np.zeros(n, dtype=np.int64)
        active = left[base + node] >= 0
        while active.any():
            g = base + node[active]
            go = X[rows[active], feature[g]] <= threshold[g]
            node[active] = np.where(go, left[g], right[g])
            active = left[base + node] >= 0
        acc += value[base + node]
    return acc / T


def forest_predict(X, feature, threshold, left, right, value, offsets, use_numba=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if use_numba is None:
        use_numba = numba_enabled()
    fn = forest_predict_numba if use_numba else forest_predict_numpy
    return fn(X, feature, threshold, left, right, value, offsets)
