"""Compiled inner loops for tree growing and prediction."""
import numpy as np
from numba import njit

GINI, ENTROPY, SECOND_ORDER, SQUARED = 0, 1, 2, 3


@njit(nogil=True, cache=True)
def build_histogram(rows, row_ptr, entries, offsets, s1, s2, w):
    """Per-bin sums of (s1, s2, w) over ``rows``.

    Only non-default bins are stored per row; each feature's bin 0 is
    recovered from the node totals.
    """
    n_bins = offsets[-1]
    h1 = np.zeros(n_bins)
    h2 = np.zeros(n_bins)
    hw = np.zeros(n_bins)
    t1 = 0.0
    t2 = 0.0
    tw = 0.0
    for k in range(rows.shape[0]):
        r = rows[k]
        a, b, c = s1[r], s2[r], w[r]
        t1 += a
        t2 += b
        tw += c
        for e in range(row_ptr[r], row_ptr[r + 1]):
            j = entries[e]
            h1[j] += a
            h2[j] += b
            hw[j] += c
    for f in range(offsets.shape[0] - 1):
        lo, hi = offsets[f], offsets[f + 1]
        r1 = t1
        r2 = t2
        rw = tw
        for j in range(lo + 1, hi):
            r1 -= h1[j]
            r2 -= h2[j]
            rw -= hw[j]
        h1[lo] = r1
        h2[lo] = r2
        hw[lo] = rw
    return h1, h2, hw, t1, t2, tw


@njit(nogil=True, cache=True)
def _xlogx(p):
    if p <= 0.0:
        return 0.0
    return p * np.log(p)


@njit(nogil=True, cache=True)
def node_score(criterion, a, b, w, reg_lambda):
    """Criterion-specific score; a split's gain is score(L)+score(R)-score(parent).

    For impurity criteria the score is minus the weighted impurity.
    """
    if criterion == GINI:
        if w <= 0.0:
            return 0.0
        p = a / w
        return -w * (1.0 - p * p - (1.0 - p) * (1.0 - p))
    if criterion == ENTROPY:
        if w <= 0.0:
            return 0.0
        p = a / w
        return w * (_xlogx(p) + _xlogx(1.0 - p)) / np.log(2.0)
    if criterion == SECOND_ORDER:
        return 0.5 * a * a / (b + reg_lambda)
    # squared error on residuals a = sum r, w = count
    if w <= 0.0:
        return 0.0
    return a * a / w


@njit(nogil=True, cache=True)
def best_split(h1, h2, hw, t1, t2, tw, offsets, bin_values, feature_order,
               max_features, criterion, reg_lambda, gamma, min_child_weight):
    """Exhaustive search over midpoints between consecutive non-empty bins.

    Features are visited in ``feature_order``; once ``max_features``
    non-constant features have been visited the search stops. Ties are
    resolved towards the lowest feature index, then the lowest threshold.
    Returns (feature, threshold, gain); feature is -1 when nothing qualifies.
    """
    parent = node_score(criterion, t1, t2, tw, reg_lambda)
    best_f = -1
    best_t = 0.0
    best_g = -np.inf
    visited = 0
    for idx in range(feature_order.shape[0]):
        if visited >= max_features:
            break
        f = feature_order[idx]
        lo, hi = offsets[f], offsets[f + 1]
        prev = -1
        c1 = 0.0
        c2 = 0.0
        cw = 0.0
        nonconstant = False
        for j in range(lo, hi):
            if hw[j] <= 0.0:
                continue
            if prev >= 0:
                nonconstant = True
                r1 = t1 - c1
                r2 = t2 - c2
                rw = tw - cw
                ok = True
                if criterion == SECOND_ORDER:
                    if c2 < min_child_weight or r2 < min_child_weight:
                        ok = False
                if ok:
                    gain = (node_score(criterion, c1, c2, cw, reg_lambda)
                            + node_score(criterion, r1, r2, rw, reg_lambda) - parent)
                    if criterion == SECOND_ORDER:
                        gain -= gamma
                    thr = 0.5 * (bin_values[prev] + bin_values[j])
                    better = gain > best_g
                    if not better and gain == best_g and best_f >= 0:
                        better = f < best_f or (f == best_f and thr < best_t)
                    if better:
                        best_g = gain
                        best_f = f
                        best_t = thr
            c1 += h1[j]
            c2 += h2[j]
            cw += hw[j]
            prev = j
        if nonconstant:
            visited += 1
    return best_f, best_t, best_g


@njit(nogil=True, cache=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(nogil=True, cache=True)
def ensemble_sum(X, roots, feature, threshold, left, right, value, squash):
    """Sum over trees of leaf values (``squash``: sum of sigmoids instead)."""
    n = X.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            v = value[node]
            if squash:
                acc += 1.0 / (1.0 + np.exp(-v))
            else:
                acc += v
        out[i] = acc
    return out
