"""Tree learners: CART, random forests, gradient boosting and second-order
(XGBoost-style) boosting. All produce a :class:`TreeEnsemble`."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .params import Hyperparameters
from .tree import BinnedMatrix, Tree, grow_tree

BOOSTED, AVERAGED = "boosted", "averaged"
_PRIOR_CLIP = 1e-6


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def log_loss(y, margin) -> float:
    """Mean logistic loss of margins against 0/1 labels."""
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(margin, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, m) - y * m))


@dataclass(frozen=True)
class TreeEnsemble:
    """Fitted tree model.

    In ``boosted`` mode the margin is ``base_score + sum(leaf values)``;
    the learning rate is already folded into the stored leaf values and
    ``learning_rate`` is kept for reference only. In ``averaged`` mode
    (random forests) leaves hold class log-odds and the probability is the
    mean of the per-tree probabilities.
    """

    algorithm: str
    trees: tuple[Tree, ...]
    base_score: float = 0.0
    learning_rate: float = 1.0
    mode: str = BOOSTED
    n_features: int = 0
    params: Hyperparameters | None = None
    schema_digest: str | None = None
    train_loss: tuple[float, ...] = ()
    _flat: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        roots, offset = [], 0
        parts = {k: [] for k in ("feature", "threshold", "left", "right", "value")}
        for t in self.trees:
            roots.append(offset)
            parts["feature"].append(t.feature)
            parts["threshold"].append(t.threshold)
            parts["value"].append(t.value)
            for side in ("left", "right"):
                child = getattr(t, side)
                parts[side].append(np.where(child >= 0, child + offset, -1))
            offset += t.n_nodes
        flat = (np.asarray(roots, dtype=np.int64),) + tuple(
            np.concatenate(parts[k]) if parts[k] else np.zeros(0)
            for k in ("feature", "threshold", "left", "right", "value"))
        object.__setattr__(self, "_flat", flat)

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns, got {X.shape[1]}")
        return X

    def _tree_sum(self, X, squash: bool) -> np.ndarray:
        roots, f, t, l, r, v = self._flat
        if not len(roots):
            return np.zeros(X.shape[0])
        return K.ensemble_sum(X, roots, f.astype(np.int64), t, l.astype(np.int64),
                              r.astype(np.int64), v, squash)

    def predict_margin(self, X) -> np.ndarray:
        X = self._check(X)
        if self.mode == AVERAGED:
            return logit(self.predict_proba(X))
        return self.base_score + self._tree_sum(X, False)

    def predict_proba(self, X) -> np.ndarray:
        X = self._check(X)
        if self.mode == AVERAGED:
            return self._tree_sum(X, True) / len(self.trees)
        return sigmoid(self.base_score + self._tree_sum(X, False))

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return self.predict_proba(X) >= threshold

    @property
    def n_leaves(self) -> int:
        return sum(t.n_leaves for t in self.trees)


def _labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    return y.astype(np.float64)


def _prepare(X, y) -> tuple[BinnedMatrix, np.ndarray]:
    y = _labels(y)
    data = X if isinstance(X, BinnedMatrix) else BinnedMatrix(X)
    if data.shape[0] != y.shape[0]:
        raise ValueError("feature matrix and labels differ in length")
    return data, y


def _laplace_leaf(y, w):
    def value(idx):
        pos = float(np.dot(w[idx], y[idx]))
        tot = float(np.sum(w[idx]))
        return math.log((pos + 1.0) / (tot - pos + 1.0))
    return value


def _criterion(h: Hyperparameters) -> int:
    return K.GINI if h.criterion == "gini" else K.ENTROPY


def _max_features(h: Hyperparameters, p: int) -> int | None:
    mf = h.max_features
    if mf is None:
        return None
    if mf == "sqrt":
        return max(1, int(math.sqrt(p)))
    if mf == "log2":
        return max(1, int(math.log2(p)))
    return int(mf)


def _cart_tree(data, y, w, h, max_features=None, rng=None) -> Tree:
    if h.max_depth is not None and h.max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    return grow_tree(data, w * y, w, w, _criterion(h), _laplace_leaf(y, w),
                     max_depth=h.max_depth, max_features=max_features, rng=rng)


def fit_decision_tree(X, y, h: Hyperparameters) -> TreeEnsemble:
    """Single CART tree; leaves hold Laplace-smoothed class log-odds."""
    data, y = _prepare(X, y)
    w = np.ones_like(y)
    tree = _cart_tree(data, y, w, h)
    return TreeEnsemble("decision_tree", (tree,), 0.0, 1.0, BOOSTED, data.shape[1], h)


def fit_random_forest(X, y, h: Hyperparameters) -> TreeEnsemble:
    """Bootstrap-aggregated CART trees with per-split feature subsampling."""
    if h.n_estimators < 1:
        raise ValueError("n_estimators must be at least 1")
    data, y = _prepare(X, y)
    n, p = data.shape
    mf = _max_features(h, p)
    trees = []
    for ss in np.random.SeedSequence(h.seed).spawn(h.n_estimators):
        rng = np.random.Generator(np.random.Philox(ss))
        if h.bootstrap:
            w = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        else:
            w = np.ones(n)
        trees.append(_cart_tree(data, y, w, h, max_features=mf, rng=rng))
    return TreeEnsemble("random_forest", tuple(trees), 0.0, 1.0, AVERAGED, p, h)


def _prior(y) -> float:
    rate = float(np.clip(np.mean(y), _PRIOR_CLIP, 1.0 - _PRIOR_CLIP))
    return math.log(rate / (1.0 - rate))


def _guard_steps(tree: Tree, leaf_of_row: np.ndarray, y, margin) -> Tree:
    """Shrink any leaf step that would raise the training loss of its rows.

    Leaves partition the rows, so per-leaf non-increase implies the total
    training loss is non-increasing across stages. Halving is tried up to
    40 times, after which the leaf contributes nothing.
    """
    value = tree.value.copy()
    for leaf in np.flatnonzero(tree.is_leaf):
        rows = leaf_of_row == leaf
        if not rows.any():
            continue
        ym, mm = y[rows], margin[rows]
        before = np.sum(np.logaddexp(0.0, mm) - ym * mm)
        step = value[leaf]
        for _ in range(40):
            after = np.sum(np.logaddexp(0.0, mm + step) - ym * (mm + step))
            if after <= before:
                break
            step *= 0.5
        else:
            step = 0.0
        value[leaf] = step
    return tree.with_values(value)


def _boost(data, y, h: Hyperparameters, second_order: bool, guard: bool) -> TreeEnsemble:
    if h.n_estimators < 1:
        raise ValueError("n_estimators must be at least 1")
    if not 0.0 < h.learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    if second_order and h.gamma < 0:
        raise ValueError("gamma must be non-negative")
    n, p = data.shape
    eta = h.learning_rate
    base = _prior(y)
    margin = np.full(n, base)
    ones = np.ones(n)
    losses = [log_loss(y, margin)]
    trees = []
    for _ in range(h.n_estimators):
        prob = sigmoid(margin)
        hess = prob * (1.0 - prob)
        if second_order:
            grad = prob - y
            lam = h.reg_lambda

            def leaf(idx, grad=grad, hess=hess):
                return -eta * float(np.sum(grad[idx])) / (float(np.sum(hess[idx])) + lam)

            tree = grow_tree(data, grad, hess, ones, K.SECOND_ORDER, leaf,
                             max_depth=h.max_depth, reg_lambda=lam, gamma=h.gamma,
                             min_child_weight=h.min_child_weight)
        else:
            resid = y - prob

            def leaf(idx, resid=resid, hess=hess):
                den = float(np.sum(hess[idx]))
                return 0.0 if den < 1e-150 else eta * float(np.sum(resid[idx])) / den

            tree = grow_tree(data, resid, resid * resid, ones, K.SQUARED, leaf,
                             max_depth=h.max_depth)
        leaves = tree.apply(data.X)
        if guard:
            tree = _guard_steps(tree, leaves, y, margin)
        margin = margin + tree.value[leaves]
        losses.append(log_loss(y, margin))
        trees.append(tree)
    algo = "xgboost" if second_order else "gbm"
    return TreeEnsemble(algo, tuple(trees), base, eta, BOOSTED, p, h, train_loss=tuple(losses))


def fit_gbm(X, y, h: Hyperparameters, guard: bool = True) -> TreeEnsemble:
    """Gradient boosting on the logistic loss.

    Each stage fits a least-squares regression tree to the residuals
    ``y - p`` and sets leaf values by a Newton step ``sum(r) / sum(p(1-p))``.
    """
    data, y = _prepare(X, y)
    return _boost(data, y, h, second_order=False, guard=guard)


def fit_xgboost(X, y, h: Hyperparameters, guard: bool = True) -> TreeEnsemble:
    """Second-order boosting with L2 leaf penalty ``reg_lambda`` and split penalty ``gamma``.

    Leaf weight is ``-G / (H + lambda)`` and a split is kept only when
    ``0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma``
    is positive. Covers are sample counts.
    """
    data, y = _prepare(X, y)
    return _boost(data, y, h, second_order=True, guard=guard)
