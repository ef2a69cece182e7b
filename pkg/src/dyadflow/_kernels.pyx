# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Results match :mod:`dyadflow._fallback` exactly."""

from libc.math cimport fabs, INFINITY, NAN
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.intp_t intp


# ---------------------------------------------------------------------------
# dynamic time warping


def dtw(const double[::1] a, const double[::1] b, Py_ssize_t window=-1):
    """Accumulated |a_i - b_j| cost along the cheapest warping path.

    ``window`` is a Sakoe-Chiba radius (-1 for the full table); it is widened
    to ``|len(a) - len(b)|`` so a path always exists. The table is swept by
    anti-diagonals so the inner loop carries no dependency.
    """
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0]
    if m == 0 or n == 0:
        raise ValueError("dtw_distance needs non-empty sequences")
    cdef Py_ssize_t r
    if window < 0:
        r = m + n
    else:
        r = window
        if r < m - n:
            r = m - n
        if r < n - m:
            r = n - m
    # buffers are offset by one so index i - 1 = -1 hits a sentinel
    cdef double *bufs = <double *> malloc(3 * (m + 2) * sizeof(double))
    cdef double *brev = <double *> malloc(n * sizeof(double))
    if bufs == NULL or brev == NULL:
        free(bufs)
        free(brev)
        raise MemoryError()
    cdef double *p2 = bufs + 1
    cdef double *p1 = bufs + (m + 2) + 1
    cdef double *cur = bufs + 2 * (m + 2) + 1
    cdef double *tmp
    cdef const double *bb
    cdef Py_ssize_t i, d, lo, hi, wlo, whi
    cdef double u, l, g, best, result
    with nogil:
        for i in range(3 * (m + 2)):
            bufs[i] = INFINITY
        for i in range(n):
            brev[i] = b[n - 1 - i]
        p1[0] = fabs(a[0] - b[0])
        for d in range(1, m + n - 1):
            lo = d - n + 1 if d - n + 1 > 0 else 0
            hi = d if d < m - 1 else m - 1
            # |i - (d - i)| <= r
            wlo = (d - r + 1) // 2 if d > r else 0
            whi = (d + r) // 2
            if wlo > lo:
                lo = wlo
            if whi < hi:
                hi = whi
            # b[d - i] == brev[n - 1 - d + i]
            bb = brev + (n - 1 - d)
            for i in range(lo, hi + 1):
                u = p1[i - 1]
                l = p1[i]
                g = p2[i - 1]
                best = u if u < l else l
                best = g if g < best else best
                cur[i] = fabs(a[i] - bb[i]) + best
            cur[lo - 1] = INFINITY
            cur[hi + 1] = INFINITY
            tmp = p2
            p2 = p1
            p1 = cur
            cur = tmp
        result = p1[m - 1]
    free(bufs)
    free(brev)
    return result


# ---------------------------------------------------------------------------
# CART


cdef inline uint64_t splitmix64(uint64_t *state) noexcept nogil:
    state[0] += <uint64_t> 0x9E3779B97F4A7C15
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t> 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t> 0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void _swap(double *v, intp *l, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef double tv = v[i]
    cdef intp tl = l[i]
    v[i] = v[j]
    l[i] = l[j]
    v[j] = tv
    l[j] = tl


cdef void _insertion(double *v, intp *l, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double x
    cdef intp y
    for i in range(1, n):
        x = v[i]
        y = l[i]
        j = i
        while j > 0 and v[j - 1] > x:
            v[j] = v[j - 1]
            l[j] = l[j - 1]
            j -= 1
        v[j] = x
        l[j] = y


cdef void _sift(double *v, intp *l, Py_ssize_t start, Py_ssize_t end) noexcept nogil:
    cdef Py_ssize_t child, root = start
    while True:
        child = 2 * root + 1
        if child >= end:
            break
        if child + 1 < end and v[child] < v[child + 1]:
            child += 1
        if v[root] < v[child]:
            _swap(v, l, root, child)
            root = child
        else:
            break


cdef void _heapsort(double *v, intp *l, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t start = (n - 2) // 2, end
    while start >= 0:
        _sift(v, l, start, n)
        start -= 1
    end = n - 1
    while end > 0:
        _swap(v, l, 0, end)
        _sift(v, l, 0, end)
        end -= 1


cdef void _introsort(double *v, intp *l, Py_ssize_t n, int maxd) noexcept nogil:
    # sorts values ascending, carrying labels along
    cdef Py_ssize_t i, j, mid
    cdef double pivot
    while n > 16:
        if maxd <= 0:
            _heapsort(v, l, n)
            return
        maxd -= 1
        mid = n // 2
        if v[mid] < v[0]:
            _swap(v, l, mid, 0)
        if v[n - 1] < v[0]:
            _swap(v, l, n - 1, 0)
        if v[n - 1] < v[mid]:
            _swap(v, l, n - 1, mid)
        pivot = v[mid]
        i = 0
        j = n - 1
        while True:
            while v[i] < pivot:
                i += 1
            while pivot < v[j]:
                j -= 1
            if i >= j:
                break
            _swap(v, l, i, j)
            i += 1
            j -= 1
        # [0, j] <= pivot <= [j + 1, n)
        _introsort(v + j + 1, l + j + 1, n - j - 1, maxd)
        n = j + 1
    _insertion(v, l, n)


cdef int _log2(Py_ssize_t n) noexcept nogil:
    cdef int k = 0
    while n > 1:
        n >>= 1
        k += 1
    return k


cdef struct SplitResult:
    intp feature
    double threshold
    double score


cdef SplitResult _best_split(const double[:, ::1] X, const intp[::1] y, intp *rows, Py_ssize_t n,
                             intp *features, Py_ssize_t nf, Py_ssize_t n_classes, Py_ssize_t min_leaf,
                             intp *total, double *vbuf, intp *lbuf, intp *left) noexcept nogil:
    cdef SplitResult res
    cdef Py_ssize_t fi, p, c, f
    cdef intp lab, nl, nr
    cdef long long sl, sr, s0
    cdef double score, mid, v0, v1
    res.feature = -1
    res.threshold = NAN
    res.score = -INFINITY
    s0 = 0
    for c in range(n_classes):
        s0 += total[c] * total[c]
    for fi in range(nf):
        f = features[fi]
        for p in range(n):
            vbuf[p] = X[rows[p], f]
            lbuf[p] = y[rows[p]]
        _introsort(vbuf, lbuf, n, 2 * _log2(n) + 2)
        for c in range(n_classes):
            left[c] = 0
        # running sums of squared class counts on each side of the cut
        sl = 0
        sr = s0
        for p in range(n - 1):
            lab = lbuf[p]
            sl += 2 * left[lab] + 1
            sr -= 2 * (total[lab] - left[lab]) - 1
            left[lab] += 1
            nl = p + 1
            nr = n - nl
            if nl < min_leaf:
                continue
            if nr < min_leaf:
                break
            v0 = vbuf[p]
            v1 = vbuf[p + 1]
            if not v0 < v1:
                continue
            score = (<double> sl) / nl + (<double> sr) / nr
            if score > res.score:
                res.score = score
                res.feature = f
                mid = v0 / 2.0 + v1 / 2.0
                if mid >= v1:
                    mid = v0
                res.threshold = mid
    return res


def best_split(const double[:, ::1] X, const intp[::1] y, const intp[::1] rows,
               const intp[::1] features, Py_ssize_t n_classes, Py_ssize_t min_leaf):
    """Best Gini split of ``rows`` over the candidate ``features``.

    Returns ``(feature, threshold, score)`` where ``score`` is
    ``sum(left_counts²)/n_left + sum(right_counts²)/n_right``, or
    ``(-1, nan, -inf)`` when no admissible cut exists. Earlier features and
    lower thresholds win ties.
    """
    cdef Py_ssize_t n = rows.shape[0], nf = features.shape[0], c, p
    cdef intp *r = <intp *> malloc((n + 1) * sizeof(intp))
    cdef intp *fs = <intp *> malloc((nf + 1) * sizeof(intp))
    cdef intp *total = <intp *> malloc(n_classes * sizeof(intp))
    cdef intp *left = <intp *> malloc(n_classes * sizeof(intp))
    cdef double *vbuf = <double *> malloc((n + 1) * sizeof(double))
    cdef intp *lbuf = <intp *> malloc((n + 1) * sizeof(intp))
    cdef SplitResult res
    for p in range(n):
        r[p] = rows[p]
    for p in range(nf):
        fs[p] = features[p]
    for c in range(n_classes):
        total[c] = 0
    for p in range(n):
        total[y[r[p]]] += 1
    res = _best_split(X, y, r, n, fs, nf, n_classes, min_leaf, total, vbuf, lbuf, left)
    free(r); free(fs); free(total); free(left); free(vbuf); free(lbuf)
    return int(res.feature), res.threshold, res.score


def grow_tree(const double[:, ::1] X, const intp[::1] y, const intp[::1] sample,
              Py_ssize_t n_classes, Py_ssize_t max_features, Py_ssize_t max_depth,
              Py_ssize_t min_leaf, uint64_t seed):
    """Grow one CART classification tree on the rows listed in ``sample``.

    Nodes are numbered in depth-first order, left child first. At each node
    ``max_features`` candidate columns are drawn by a partial Fisher-Yates
    shuffle driven by splitmix64 seeded with ``seed``. ``max_depth < 0``
    means unlimited. Returns ``(feature, threshold, left, right, counts,
    decrease)`` arrays; leaves have ``feature == -1``.
    """
    cdef Py_ssize_t N = sample.shape[0], d = X.shape[1]
    cdef Py_ssize_t cap = 2 * N + 1
    feature_a = np.full(cap, -1, dtype=np.intp)
    threshold_a = np.full(cap, np.nan)
    left_a = np.full(cap, -1, dtype=np.intp)
    right_a = np.full(cap, -1, dtype=np.intp)
    counts_a = np.zeros((cap, n_classes), dtype=np.intp)
    decrease_a = np.zeros(cap)
    cdef intp[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef intp[::1] left_child = left_a
    cdef intp[::1] right_child = right_a
    cdef intp[:, ::1] counts = counts_a
    cdef double[::1] decrease = decrease_a

    cdef intp *idx = <intp *> malloc((N + 1) * sizeof(intp))
    cdef intp *tmp = <intp *> malloc((N + 1) * sizeof(intp))
    cdef intp *feats = <intp *> malloc((d + 1) * sizeof(intp))
    cdef intp *total = <intp *> malloc((n_classes + 1) * sizeof(intp))
    cdef intp *lcount = <intp *> malloc((n_classes + 1) * sizeof(intp))
    cdef double *vbuf = <double *> malloc((N + 1) * sizeof(double))
    cdef intp *lbuf = <intp *> malloc((N + 1) * sizeof(intp))
    # stack entries: start, end, depth, parent, is_left
    cdef intp *stack = <intp *> malloc(5 * (cap + 1) * sizeof(intp))
    cdef uint64_t state = seed
    cdef Py_ssize_t sp = 0, n_nodes = 0, node, start, end, depth, parent, is_left
    cdef Py_ssize_t i, k, j, c, n, nl, mtry, pure
    cdef intp t
    cdef long long s0
    cdef double parent_score, dec
    cdef SplitResult res

    if N == 0:
        raise ValueError("cannot grow a tree on zero rows")
    mtry = max_features if 0 < max_features <= d else d
    for i in range(N):
        idx[i] = sample[i]
    stack[0] = 0; stack[1] = N; stack[2] = 0; stack[3] = -1; stack[4] = 0
    sp = 1
    with nogil:
        while sp > 0:
            sp -= 1
            start = stack[5 * sp]
            end = stack[5 * sp + 1]
            depth = stack[5 * sp + 2]
            parent = stack[5 * sp + 3]
            is_left = stack[5 * sp + 4]
            node = n_nodes
            n_nodes += 1
            if parent >= 0:
                if is_left:
                    left_child[parent] = node
                else:
                    right_child[parent] = node
            n = end - start
            for c in range(n_classes):
                total[c] = 0
            for i in range(start, end):
                total[y[idx[i]]] += 1
            pure = 0
            s0 = 0
            for c in range(n_classes):
                counts[node, c] = total[c]
                s0 += total[c] * total[c]
                if total[c] == n:
                    pure = 1
            if pure or n < 2 * min_leaf or n < 2 or (max_depth >= 0 and depth >= max_depth):
                continue
            for k in range(d):
                feats[k] = k
            for k in range(mtry):
                j = k + <Py_ssize_t> (splitmix64(&state) % <uint64_t> (d - k))
                t = feats[k]; feats[k] = feats[j]; feats[j] = t
            res = _best_split(X, y, idx + start, n, feats, mtry, n_classes, min_leaf,
                              total, vbuf, lbuf, lcount)
            if res.feature < 0:
                continue
            parent_score = (<double> s0) / n
            dec = res.score - parent_score
            decrease[node] = dec if dec > 0 else 0.0
            feature[node] = res.feature
            threshold[node] = res.threshold
            # partition rows: x <= threshold to the left, preserving order
            nl = 0
            k = 0
            for i in range(start, end):
                if X[idx[i], res.feature] <= res.threshold:
                    idx[start + nl] = idx[i]
                    nl += 1
                else:
                    tmp[k] = idx[i]
                    k += 1
            for i in range(k):
                idx[start + nl + i] = tmp[i]
            # right pushed first so the left subtree is numbered first
            stack[5 * sp] = start + nl; stack[5 * sp + 1] = end; stack[5 * sp + 2] = depth + 1
            stack[5 * sp + 3] = node; stack[5 * sp + 4] = 0
            sp += 1
            stack[5 * sp] = start; stack[5 * sp + 1] = start + nl; stack[5 * sp + 2] = depth + 1
            stack[5 * sp + 3] = node; stack[5 * sp + 4] = 1
            sp += 1
    free(idx); free(tmp); free(feats); free(total); free(lcount); free(vbuf); free(lbuf); free(stack)
    return (feature_a[:n_nodes].copy(), threshold_a[:n_nodes].copy(), left_a[:n_nodes].copy(),
            right_a[:n_nodes].copy(), counts_a[:n_nodes].copy(), decrease_a[:n_nodes].copy())
