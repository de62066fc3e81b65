"""Binary decision trees stored as flat node arrays, and the shared grower.

Splits send ``x[feature] < threshold`` to the left child. Thresholds are
midpoints between consecutive distinct training values present in the
node, so the search is exact CART rather than a histogram approximation:
every distinct value of a feature gets its own bin.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels as K

LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray    # int64, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray       # int64, -1 for leaves
    right: np.ndarray
    value: np.ndarray      # leaf output (log-odds contribution)
    cover: np.ndarray      # training weight reaching the node

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.is_leaf))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for j in range(self.n_nodes):
            if self.feature[j] >= 0:
                depth[self.left[j]] = depth[self.right[j]] = depth[j] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return K.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def with_values(self, value: np.ndarray) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right,
                    np.asarray(value, dtype=np.float64), self.cover)

    def check_cover(self, rtol: float = 1e-9) -> None:
        internal = np.flatnonzero(self.feature >= 0)
        if np.any(self.cover <= 0):
            raise ValueError("tree has a node with non-positive cover")
        kids = self.cover[self.left[internal]] + self.cover[self.right[internal]]
        if not np.allclose(self.cover[internal], kids, rtol=rtol, atol=0.0):
            raise ValueError("parent cover differs from the sum of its children")

    def to_dict(self) -> dict:
        nodes = []
        for j in range(self.n_nodes):
            leaf = self.feature[j] < 0
            nodes.append({
                "feature": None if leaf else int(self.feature[j]),
                "threshold": None if leaf else float(self.threshold[j]),
                "left": None if leaf else int(self.left[j]),
                "right": None if leaf else int(self.right[j]),
                "leaf_value": float(self.value[j]) if leaf else None,
                "cover": float(self.cover[j]),
            })
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        nodes = doc["nodes"]
        f = np.array([LEAF if n["feature"] is None else n["feature"] for n in nodes], dtype=np.int64)
        return cls(
            feature=f,
            threshold=np.array([0.0 if n["threshold"] is None else n["threshold"] for n in nodes]),
            left=np.array([-1 if n["left"] is None else n["left"] for n in nodes], dtype=np.int64),
            right=np.array([-1 if n["right"] is None else n["right"] for n in nodes], dtype=np.int64),
            value=np.array([0.0 if n["leaf_value"] is None else n["leaf_value"] for n in nodes]),
            cover=np.array([n["cover"] for n in nodes], dtype=np.float64),
        )


class BinnedMatrix:
    """Distinct-value bins of a dense design matrix.

    Each feature's smallest distinct value is its default bin; per row only
    the bins of non-default values are stored (CSR layout), which keeps the
    histogram pass proportional to the number of non-zero one-hot cells.
    """

    def __init__(self, X: np.ndarray):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("need a non-empty 2-d feature matrix")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature matrix contains non-finite values")
        self.X = X
        n, p = X.shape
        offsets = [0]
        values = []
        row_parts, bin_parts = [], []
        for j in range(p):
            col = X[:, j]
            lo, hi = col.min(), col.max()
            if lo == hi:
                uniq = np.array([lo])
                inv = None
            elif np.all((col == lo) | (col == hi)):
                uniq = np.array([lo, hi])
                inv = (col == hi).astype(np.int64)
            else:
                uniq, inv = np.unique(col, return_inverse=True)
            values.append(uniq)
            if inv is not None:
                nz = np.flatnonzero(inv)
                row_parts.append(nz)
                bin_parts.append(offsets[-1] + inv[nz])
            offsets.append(offsets[-1] + len(uniq))
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.bin_values = np.concatenate(values)
        rows = np.concatenate(row_parts) if row_parts else np.zeros(0, dtype=np.int64)
        bins = np.concatenate(bin_parts) if bin_parts else np.zeros(0, dtype=np.int64)
        order = np.argsort(rows, kind="stable")
        self.entries = bins[order].astype(np.int64)
        self.row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=self.row_ptr[1:])

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape


def grow_tree(
    data: BinnedMatrix,
    s1: np.ndarray,
    s2: np.ndarray,
    w: np.ndarray,
    criterion: int,
    leaf_value: Callable[[np.ndarray], float],
    max_depth: int | None = None,
    reg_lambda: float = 1.0,
    gamma: float = 0.0,
    min_child_weight: float = 0.0,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    rows: np.ndarray | None = None,
) -> Tree:
    """Greedy depth-first growth on per-row statistics.

    For the impurity criteria ``s1`` is the weighted positive count and
    ``w`` the weight; for second-order boosting ``s1, s2`` are gradient and
    hessian; for squared error ``s1`` is the residual and ``s2`` its square.
    ``leaf_value`` maps the row indices of a leaf to its output. The cover
    of a node is the sum of ``w`` over its rows.
    """
    n, p = data.shape
    if rows is None:
        rows = np.flatnonzero(w > 0)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot grow a tree on zero rows")
    depth_limit = np.inf if max_depth is None else int(max_depth)
    m = p if max_features is None else max(1, min(int(max_features), p))
    ascending = np.arange(p, dtype=np.int64)

    feat, thr, left, right, val, cov = [], [], [], [], [], []

    def new_node():
        feat.append(LEAF); thr.append(0.0); left.append(-1); right.append(-1)
        val.append(0.0); cov.append(0.0)
        return len(feat) - 1

    root = new_node()
    hist = K.build_histogram(rows, data.row_ptr, data.entries, data.offsets, s1, s2, w)
    stack = [(root, rows, 0, hist)]
    while stack:
        node, idx, depth, (h1, h2, hw, t1, t2, tw) = stack.pop()
        cov[node] = tw
        split_f = -1
        if depth < depth_limit and _splittable(criterion, t1, t2, tw):
            order = ascending if m == p else rng.permutation(p).astype(np.int64)
            split_f, split_t, gain = K.best_split(
                h1, h2, hw, t1, t2, tw, data.offsets, data.bin_values, order, m,
                criterion, reg_lambda, gamma, min_child_weight)
            if criterion == K.SECOND_ORDER and not gain > 0.0:
                split_f = -1
        if split_f < 0:
            val[node] = float(leaf_value(idx))
            continue
        go_left = data.X[idx, split_f] < split_t
        li, ri = idx[go_left], idx[~go_left]
        small, large = (li, ri) if li.size <= ri.size else (ri, li)
        hs = K.build_histogram(small, data.row_ptr, data.entries, data.offsets, s1, s2, w)
        hl = (h1 - hs[0], h2 - hs[1], hw - hs[2], t1 - hs[3], t2 - hs[4], tw - hs[5])
        h_left, h_right = (hs, hl) if small is li else (hl, hs)
        ln, rn = new_node(), new_node()
        feat[node], thr[node], left[node], right[node] = split_f, split_t, ln, rn
        # right pushed first so the left subtree is numbered first
        stack.append((rn, ri, depth + 1, h_right))
        stack.append((ln, li, depth + 1, h_left))

    tree = Tree(np.asarray(feat, dtype=np.int64), np.asarray(thr, dtype=np.float64),
                np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
                np.asarray(val, dtype=np.float64), np.asarray(cov, dtype=np.float64))
    return _exact_cover(tree)


def _splittable(criterion: int, t1: float, t2: float, tw: float) -> bool:
    if tw <= 0:
        return False
    if criterion in (K.GINI, K.ENTROPY):
        return 1e-12 * tw < t1 < tw - 1e-12 * tw
    if criterion == K.SQUARED:
        return t2 - t1 * t1 / tw > 1e-12 * max(t2, 1e-300)
    return True


def _exact_cover(tree: Tree) -> Tree:
    """Recompute internal covers bottom-up from the leaves.

    Histogram subtraction leaves rounding noise in covers of non-integer
    weights; summing children keeps cover(parent) = cover(left) + cover(right)
    exact in floating point.
    """
    cover = tree.cover.copy()
    for j in range(tree.n_nodes - 1, -1, -1):
        if tree.feature[j] >= 0:
            cover[j] = cover[tree.left[j]] + cover[tree.right[j]]
    return Tree(tree.feature, tree.threshold, tree.left, tree.right, tree.value, cover)
