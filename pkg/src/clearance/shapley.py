"""Shapley attributions in log-odds (margin) space.

Two routes are provided and are checked against each other in the tests:

* :func:`exact_shapley` enumerates every feature subset (cost ``2**p``) for
  any model exposing ``predict_margin``;
* :func:`tree_shap` runs the polynomial TreeSHAP recursions on boosted
  tree ensembles.

Absent features are integrated out either over a background sample
(``"interventional"``) or along the tree paths weighted by node cover
(``"tree_path_dependent"``, trees only).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _treeshap
from .models import AVERAGED, LinearModel, TreeEnsemble, sigmoid

INTERVENTIONAL = "interventional"
PATH_DEPENDENT = "tree_path_dependent"
MAX_EXACT_FEATURES = 20


class ShapError(ValueError):
    pass


@dataclass(frozen=True)
class ShapExplanation:
    phi: np.ndarray
    base_value: float
    prediction: float
    row_id: object = None
    feature_names: tuple[str, ...] | None = None

    @property
    def probability(self) -> float:
        return float(sigmoid(np.array([self.prediction]))[0])

    def additivity_gap(self) -> float:
        return abs(self.base_value + float(np.sum(self.phi)) - self.prediction)


@dataclass(frozen=True)
class ExplanationSet:
    """Attributions for many rows sharing one model and feature list."""

    phi: np.ndarray            # (n_rows, n_features)
    base_value: float
    margins: np.ndarray
    feature_names: tuple[str, ...]
    row_ids: np.ndarray | None = None

    def __len__(self) -> int:
        return self.phi.shape[0]

    def __getitem__(self, i: int) -> ShapExplanation:
        rid = i if self.row_ids is None else self.row_ids[i]
        return ShapExplanation(self.phi[i], self.base_value, float(self.margins[i]), rid,
                               self.feature_names)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def max_additivity_gap(self) -> float:
        return float(np.max(np.abs(self.base_value + self.phi.sum(axis=1) - self.margins)))


def _names(names, p):
    return tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))


def _matrix(X) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if hasattr(X, "schema") and hasattr(X, "values"):
        return np.ascontiguousarray(X.values, dtype=np.float64), tuple(X.schema.names)
    X = np.ascontiguousarray(X, dtype=np.float64)
    return (X[None, :] if X.ndim == 1 else X), None


def shapley_weights(p: int) -> np.ndarray:
    """``w[s] = s! (p-s-1)! / p!`` for coalition sizes ``s = 0..p-1``."""
    return np.array([math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p)
                     for s in range(p)])


def _popcount(masks: np.ndarray, p: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(p)) & 1).sum(axis=1)


def _interventional_values(model, x, background, masks, chunk=200_000):
    p = x.shape[0]
    bits = ((masks[:, None] >> np.arange(p)) & 1).astype(bool)
    nb = background.shape[0]
    out = np.empty(masks.shape[0])
    per = max(1, chunk // nb)
    for start in range(0, masks.shape[0], per):
        sel = bits[start:start + per]
        hybrid = np.where(sel[:, None, :], x[None, None, :], background[None, :, :])
        margins = model.predict_margin(hybrid.reshape(-1, p)).reshape(sel.shape[0], nb)
        out[start:start + per] = margins.mean(axis=1)
    return out


def _path_values(ensemble: TreeEnsemble, x, masks):
    """Cover-weighted conditional expectation for every coalition, tree by tree."""
    p = x.shape[0]
    total = np.full(masks.shape[0], ensemble.base_score)
    for tree in ensemble.trees:
        g = [None] * tree.n_nodes
        for j in range(tree.n_nodes - 1, -1, -1):
            f = tree.feature[j]
            if f < 0:
                g[j] = np.full(masks.shape[0], tree.value[j])
                continue
            l, r = tree.left[j], tree.right[j]
            hot = g[l] if x[f] < tree.threshold[j] else g[r]
            avg = (g[l] * tree.cover[l] + g[r] * tree.cover[r]) / tree.cover[j]
            present = ((masks >> f) & 1).astype(bool)
            g[j] = np.where(present, hot, avg)
        total += g[0]
    return total


def exact_shapley(model, x, background=None, mode: str = INTERVENTIONAL,
                  feature_names: Sequence[str] | None = None, row_id=None) -> ShapExplanation:
    """Shapley values by enumerating all ``2**p`` coalitions.

    ``v(S)`` is the mean margin over ``background`` with the features in S
    taken from ``x`` (interventional), or the cover-weighted path
    expectation of a boosted tree ensemble (``tree_path_dependent``).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    p = x.shape[0]
    if p > MAX_EXACT_FEATURES:
        raise ShapError(f"exact enumeration over {p} features is refused (limit "
                        f"{MAX_EXACT_FEATURES}); use tree_shap for tree ensembles")
    masks = np.arange(1 << p, dtype=np.int64)
    if mode == INTERVENTIONAL:
        if background is None or len(background) == 0:
            raise ShapError("interventional mode needs a non-empty background set")
        background = np.ascontiguousarray(background, dtype=np.float64)
        v = _interventional_values(model, x, background, masks)
    elif mode == PATH_DEPENDENT:
        if not isinstance(model, TreeEnsemble) or model.mode == AVERAGED:
            raise ShapError("path-dependent values need a boosted-mode tree ensemble")
        v = _path_values(model, x, masks)
    else:
        raise ShapError(f"unknown mode {mode!r}")
    weights = shapley_weights(p)
    sizes = _popcount(masks, p)
    phi = np.zeros(p)
    for i in range(p):
        without = masks[((masks >> i) & 1) == 0]
        phi[i] = np.sum(weights[sizes[without]] * (v[without | (1 << i)] - v[without]))
    prediction = float(model.predict_margin(x[None, :])[0])
    return ShapExplanation(phi, float(v[0]), prediction, row_id, _names(feature_names, p))


def _flat(ensemble: TreeEnsemble):
    for t in ensemble.trees:
        if t.cover is None or not np.all(np.isfinite(t.cover)) or np.any(t.cover <= 0):
            raise ShapError("every tree needs positive node covers for TreeSHAP")
    roots, feature, threshold, left, right, value = ensemble._flat
    cover = np.concatenate([t.cover for t in ensemble.trees])
    depth = max(t.depth() for t in ensemble.trees)
    return roots, feature, threshold, left, right, value, cover, depth


def expected_margin(ensemble: TreeEnsemble) -> float:
    """Cover-weighted mean margin over the training distribution of each tree."""
    total = ensemble.base_score
    for t in ensemble.trees:
        leaves = t.is_leaf
        total += float(np.sum(t.value[leaves] * t.cover[leaves]) / t.cover[0])
    return total


def tree_shap(ensemble: TreeEnsemble, X, background=None, mode: str = PATH_DEPENDENT,
              feature_names: Sequence[str] | None = None, row_ids=None) -> ExplanationSet:
    """TreeSHAP attributions for every row of ``X``.

    The ensemble attribution is the sum over trees. ``base_value`` is the
    cover-weighted expected margin (path-dependent) or the mean background
    margin (interventional).
    """
    if not isinstance(ensemble, TreeEnsemble):
        raise ShapError("tree_shap needs a tree ensemble")
    if ensemble.mode == AVERAGED:
        raise ShapError("tree_shap explains boosted-mode (margin-additive) ensembles only")
    X, names = _matrix(X)
    names = _names(feature_names or names, X.shape[1])
    if X.shape[1] != ensemble.n_features:
        raise ShapError(f"expected {ensemble.n_features} columns, got {X.shape[1]}")
    roots, f, t, l, r, v, cover, depth = _flat(ensemble)
    margins = ensemble.predict_margin(X)
    if mode == PATH_DEPENDENT:
        phi = _treeshap.path_dependent(X, roots, f, t, l, r, v, cover, depth)
        base = expected_margin(ensemble)
    elif mode == INTERVENTIONAL:
        if background is None or len(background) == 0:
            raise ShapError("interventional mode needs a non-empty background set")
        Z, _ = _matrix(background)
        phi = _treeshap.interventional(X, Z, roots, f, t, l, r, v, depth)
        base = float(np.mean(ensemble.predict_margin(Z)))
    else:
        raise ShapError(f"unknown mode {mode!r}")
    return ExplanationSet(phi, base, margins, names,
                          None if row_ids is None else np.asarray(row_ids))


def linear_shap(model: LinearModel, X, background, feature_names=None,
                row_ids=None) -> ExplanationSet:
    """Closed-form interventional attributions of a linear margin."""
    X, names = _matrix(X)
    Z, _ = _matrix(background)
    mean = Z.mean(axis=0)
    phi = (X - mean) * model.weights
    base = float(mean @ model.weights + model.intercept)
    return ExplanationSet(phi, base, model.predict_margin(X),
                          _names(feature_names or names, X.shape[1]),
                          None if row_ids is None else np.asarray(row_ids))


def explain(model, X, background=None, mode: str | None = None, feature_names=None,
            row_ids=None) -> ExplanationSet:
    """Pick the fastest exact route for ``model``."""
    if isinstance(model, LinearModel):
        return linear_shap(model, X, background, feature_names, row_ids)
    if isinstance(model, TreeEnsemble) and model.mode != AVERAGED:
        mode = mode or (PATH_DEPENDENT if background is None else INTERVENTIONAL)
        return tree_shap(model, X, background, mode, feature_names, row_ids)
    Xm, names = _matrix(X)
    rows = [exact_shapley(model, x, background, INTERVENTIONAL, feature_names or names)
            for x in Xm]
    return ExplanationSet(np.array([e.phi for e in rows]), rows[0].base_value,
                          np.array([e.prediction for e in rows]),
                          _names(feature_names or names, Xm.shape[1]),
                          None if row_ids is None else np.asarray(row_ids))


def mean_abs_shap(explanations: ExplanationSet | Iterable[ShapExplanation]) -> list[tuple[str, float]]:
    """Features ranked by mean |phi|, descending; ties in alphabetical order."""
    if isinstance(explanations, ExplanationSet):
        if len(explanations) == 0:
            raise ShapError("no explanations to summarise")
        means = np.abs(explanations.phi).mean(axis=0)
        names = explanations.feature_names
    else:
        items = list(explanations)
        if not items:
            raise ShapError("no explanations to summarise")
        names = items[0].feature_names or _names(None, items[0].phi.shape[0])
        for e in items[1:]:
            other = e.feature_names or _names(None, e.phi.shape[0])
            if tuple(other) != tuple(names):
                raise ShapError("explanations were produced under different schemas")
        means = np.abs(np.array([e.phi for e in items])).mean(axis=0)
    ranked = sorted(zip(names, (float(m) for m in means)), key=lambda kv: (-kv[1], kv[0]))
    return ranked


@dataclass(frozen=True)
class LocalReport:
    contributions: list[tuple[str, float, float]]   # (feature, phi, feature value)
    base_value: float
    margin: float
    probability: float

    def lines(self) -> list[str]:
        out = [f"base value {self.base_value:+.3f} log-odds"]
        out += [f"{name}: {phi:+.3f} (value {val:g})" for name, phi, val in self.contributions]
        out.append(f"final {self.margin:+.3f} log-odds, p = {self.probability:.3f}")
        return out


def local_report(explanation: ShapExplanation, top_k: int = 10, x=None) -> LocalReport:
    """Largest-|phi| contributions of one explanation plus base, margin and probability."""
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    phi = np.asarray(explanation.phi, dtype=np.float64)
    names = explanation.feature_names or _names(None, phi.shape[0])
    order = sorted(range(phi.shape[0]), key=lambda j: (-abs(phi[j]), names[j]))[:top_k]
    values = np.full(phi.shape[0], np.nan) if x is None else np.asarray(x, dtype=np.float64)
    margin = explanation.base_value + float(phi.sum())
    prob = float(sigmoid(np.array([margin]))[0])
    return LocalReport([(names[j], float(phi[j]), float(values[j])) for j in order],
                       explanation.base_value, margin, prob)
