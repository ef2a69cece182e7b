"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Both backends perform the same floating-point operations in the same
order where it matters, so their results agree bit for bit.
"""

from __future__ import annotations

import numpy as np


def dtw(a, b, window: int = -1) -> float:
    """Anti-diagonal wavefront DTW; see ``_kernels.dtw`` for the contract."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    m, n = a.shape[0], b.shape[0]
    if m == 0 or n == 0:
        raise ValueError("dtw_distance needs non-empty sequences")
    r = max(m, n) if window < 0 else max(window, abs(m - n))
    inf = np.inf
    # diagonals indexed by i; cell (i, d - i)
    prev2 = np.full(m, inf)  # diagonal d - 2
    prev1 = np.full(m, inf)  # diagonal d - 1
    prev1[0] = abs(a[0] - b[0])
    for d in range(1, m + n - 1):
        lo = max(0, d - n + 1)
        hi = min(m - 1, d)
        i = np.arange(lo, hi + 1)
        j = d - i
        cost = np.abs(a[i] - b[j])
        up = np.full(i.shape[0], inf)  # (i-1, j)
        diag = np.full(i.shape[0], inf)  # (i-1, j-1)
        left = np.full(i.shape[0], inf)  # (i, j-1)
        has_up = i > 0
        up[has_up] = prev1[i[has_up] - 1]
        has_diag = has_up & (j > 0)
        diag[has_diag] = prev2[i[has_diag] - 1]
        has_left = j > 0
        left[has_left] = prev1[i[has_left]]
        cur = np.full(m, inf)
        best = np.minimum(np.minimum(up, diag), left)
        vals = cost + best
        vals[np.abs(i - j) > r] = inf
        cur[lo : hi + 1] = vals
        prev2, prev1 = prev1, cur
    return float(prev1[m - 1])


def best_split(X, y, rows, features, n_classes: int, min_leaf: int):
    """Vectorised Gini split search; see ``_kernels.best_split``."""
    rows = np.asarray(rows, dtype=np.intp)
    yr = np.asarray(y, dtype=np.intp)[rows]
    n = rows.shape[0]
    total = np.bincount(yr, minlength=n_classes).astype(np.int64)
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), yr] = 1
    best = (-1, float("nan"), -np.inf)
    if n < 2:
        return best
    nl = np.arange(1, n, dtype=np.int64)
    nr = n - nl
    for f in np.asarray(features, dtype=np.intp):
        vals = X[rows, f]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = total - left
        sl = np.sum(left * left, axis=1)
        sr = np.sum(right * right, axis=1)
        ok = (nl >= min_leaf) & (nr >= min_leaf) & (v[:-1] < v[1:])
        if not ok.any():
            continue
        score = sl.astype(np.float64) / nl + sr.astype(np.float64) / nr
        score[~ok] = -np.inf
        p = int(np.argmax(score))
        if score[p] > best[2]:
            v0, v1 = v[p], v[p + 1]
            mid = v0 / 2.0 + v1 / 2.0
            if mid >= v1:
                mid = v0
            best = (int(f), float(mid), float(score[p]))
    return best


_MASK = (1 << 64) - 1


class SplitMix64:
    """Same generator as the compiled kernel, for identical feature draws."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def grow_tree(X, y, sample, n_classes: int, max_features: int, max_depth: int, min_leaf: int, seed: int):
    """Reference CART growth; see ``_kernels.grow_tree`` for the contract."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    idx = np.array(sample, dtype=np.intp)
    n_total, d = idx.shape[0], X.shape[1]
    if n_total == 0:
        raise ValueError("cannot grow a tree on zero rows")
    mtry = max_features if 0 < max_features <= d else d
    rng = SplitMix64(seed)
    feature, threshold, left, right, counts, decrease = [], [], [], [], [], []
    stack = [(0, n_total, 0, -1, False)]
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node = len(feature)
        for lst, v in ((feature, -1), (threshold, np.nan), (left, -1), (right, -1), (decrease, 0.0)):
            lst.append(v)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        rows = idx[start:end]
        n = end - start
        total = np.bincount(y[rows], minlength=n_classes)
        counts.append(total)
        if total.max() == n or n < 2 * min_leaf or n < 2 or (max_depth >= 0 and depth >= max_depth):
            continue
        feats = list(range(d))
        for k in range(mtry):
            j = k + rng.next() % (d - k)
            feats[k], feats[j] = feats[j], feats[k]
        f, thr, score = best_split(X, y, rows, feats[:mtry], n_classes, min_leaf)
        if f < 0:
            continue
        s0 = int(np.sum(total.astype(np.int64) ** 2))
        decrease[node] = max(score - s0 / n, 0.0)
        feature[node] = f
        threshold[node] = thr
        go_left = X[rows, f] <= thr
        idx[start:end] = np.concatenate([rows[go_left], rows[~go_left]])
        nl = int(go_left.sum())
        stack.append((start + nl, end, depth + 1, node, False))
        stack.append((start, start + nl, depth + 1, node, True))
    return (
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(counts, dtype=np.intp).reshape(-1, n_classes),
        np.array(decrease, dtype=np.float64),
    )
