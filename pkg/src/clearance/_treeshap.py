"""Compiled TreeSHAP kernels over flat ensemble arrays.

``path_dependent`` follows the polynomial path-weight recursion, using
node covers to weight the branch a missing feature would take.
``interventional`` explains against one background row at a time: a leaf
reached only when features in A come from ``x`` and features in B from the
background row contributes +v*(|A|-1)!|B|!/(|A|+|B|)! to each feature of A
and -v*|A|!(|B|-1)!/(|A|+|B|)! to each feature of B.

The kernels are recursive, and numba's on-disk cache does not reload
recursive functions safely, so they are compiled once per process.
"""
import math

import numpy as np
from numba import njit


@njit(nogil=True)
def _extend(pf, pz, po, pw, base, depth, zero, one, feat):
    pf[base + depth] = feat
    pz[base + depth] = zero
    po[base + depth] = one
    pw[base + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[base + i + 1] += one * pw[base + i] * (i + 1) / (depth + 1)
        pw[base + i] = zero * pw[base + i] * (depth - i) / (depth + 1)


@njit(nogil=True)
def _unwind(pf, pz, po, pw, base, depth, idx):
    one = po[base + idx]
    zero = pz[base + idx]
    nxt = pw[base + depth]
    for i in range(depth - 1, -1, -1):
        if one != 0.0:
            tmp = pw[base + i]
            pw[base + i] = nxt * (depth + 1) / ((i + 1) * one)
            nxt = tmp - pw[base + i] * zero * (depth - i) / (depth + 1)
        else:
            pw[base + i] = pw[base + i] * (depth + 1) / (zero * (depth - i))
    for i in range(idx, depth):
        pf[base + i] = pf[base + i + 1]
        pz[base + i] = pz[base + i + 1]
        po[base + i] = po[base + i + 1]


@njit(nogil=True)
def _unwound_sum(pz, po, pw, base, depth, idx):
    one = po[base + idx]
    zero = pz[base + idx]
    nxt = pw[base + depth]
    total = 0.0
    if one != 0.0:
        for i in range(depth - 1, -1, -1):
            tmp = nxt / ((i + 1) * one)
            total += tmp
            nxt = pw[base + i] - tmp * zero * (depth - i)
    else:
        for i in range(depth - 1, -1, -1):
            total += pw[base + i] / (zero * (depth - i))
    return total * (depth + 1)


@njit(nogil=True)
def _recurse(node, x, feature, threshold, left, right, value, cover, phi,
             pf, pz, po, pw, parent_base, depth, zero, one, feat):
    base = parent_base + depth
    if depth > 0:
        for i in range(depth):
            pf[base + i] = pf[parent_base + i]
            pz[base + i] = pz[parent_base + i]
            po[base + i] = po[parent_base + i]
            pw[base + i] = pw[parent_base + i]
    _extend(pf, pz, po, pw, base, depth, zero, one, feat)
    f = feature[node]
    if f < 0:
        for i in range(1, depth + 1):
            w = _unwound_sum(pz, po, pw, base, depth, i)
            phi[pf[base + i]] += w * (po[base + i] - pz[base + i]) * value[node]
        return
    if x[f] < threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    hot_zero = cover[hot] / cover[node]
    cold_zero = cover[cold] / cover[node]
    in_zero = 1.0
    in_one = 1.0
    k = 0
    while k <= depth:
        if pf[base + k] == f:
            break
        k += 1
    if k != depth + 1:
        in_zero = pz[base + k]
        in_one = po[base + k]
        _unwind(pf, pz, po, pw, base, depth, k)
        depth -= 1
    _recurse(hot, x, feature, threshold, left, right, value, cover, phi,
             pf, pz, po, pw, base, depth + 1, hot_zero * in_zero, in_one, f)
    _recurse(cold, x, feature, threshold, left, right, value, cover, phi,
             pf, pz, po, pw, base, depth + 1, cold_zero * in_zero, 0.0, f)


@njit(nogil=True)
def path_dependent(X, roots, feature, threshold, left, right, value, cover, max_depth):
    n, p = X.shape
    phi = np.zeros((n, p + 1))
    size = (max_depth + 2) * (max_depth + 3) // 2 + max_depth + 2
    pf = np.zeros(size, dtype=np.int64)
    pz = np.zeros(size)
    po = np.zeros(size)
    pw = np.zeros(size)
    for i in range(n):
        row = phi[i]
        for t in range(roots.shape[0]):
            # feature index p is a dummy slot for the root's placeholder element
            _recurse(roots[t], X[i], feature, threshold, left, right, value, cover, row,
                     pf, pz, po, pw, 0, 0, 1.0, 1.0, p)
    return phi[:, :p]


@njit(nogil=True)
def _lfact(k):
    return math.lgamma(k + 1.0)


@njit(nogil=True)
def _interv_recurse(node, x, z, feature, threshold, left, right, value, phi,
                    state, stack, top, na, nb):
    f = feature[node]
    if f < 0:
        if na + nb == 0:
            return
        v = value[node]
        wa = 0.0
        wb = 0.0
        if na > 0:
            wa = math.exp(_lfact(na - 1) + _lfact(nb) - _lfact(na + nb))
        if nb > 0:
            wb = math.exp(_lfact(na) + _lfact(nb - 1) - _lfact(na + nb))
        for j in range(top):
            g = stack[j]
            if state[g] == 1:
                phi[g] += v * wa
            else:
                phi[g] -= v * wb
        return
    x_left = x[f] < threshold[node]
    z_left = z[f] < threshold[node]
    s = state[f]
    if s == 1:
        _interv_recurse(left[node] if x_left else right[node], x, z, feature, threshold, left,
                        right, value, phi, state, stack, top, na, nb)
    elif s == 2:
        _interv_recurse(left[node] if z_left else right[node], x, z, feature, threshold, left,
                        right, value, phi, state, stack, top, na, nb)
    elif x_left == z_left:
        _interv_recurse(left[node] if x_left else right[node], x, z, feature, threshold, left,
                        right, value, phi, state, stack, top, na, nb)
    else:
        stack[top] = f
        state[f] = 1
        _interv_recurse(left[node] if x_left else right[node], x, z, feature, threshold, left,
                        right, value, phi, state, stack, top + 1, na + 1, nb)
        state[f] = 2
        _interv_recurse(left[node] if z_left else right[node], x, z, feature, threshold, left,
                        right, value, phi, state, stack, top + 1, na, nb + 1)
        state[f] = 0


@njit(nogil=True)
def interventional(X, Z, roots, feature, threshold, left, right, value, max_depth):
    n, p = X.shape
    phi = np.zeros((n, p))
    state = np.zeros(p, dtype=np.int8)
    stack = np.zeros(max_depth + 1, dtype=np.int64)
    for i in range(n):
        row = phi[i]
        for b in range(Z.shape[0]):
            for t in range(roots.shape[0]):
                _interv_recurse(roots[t], X[i], Z[b], feature, threshold, left, right, value,
                                row, state, stack, 0, 0, 0)
        for j in range(p):
            row[j] /= Z.shape[0]
    return phi
