"""Metrics, stratified cross-validation, grid search and the per-state sweep."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset, partition_by_state, shuffled_split
from .features import DEFAULT_AGE_EDGES, FeatureMatrix, encode, fit_schema, with_monthly_overlap
from .models import BinnedMatrix, Hyperparameters, LINEAR, STATE_GRID, expand_grid, fit

logger = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    """A metric's denominator is zero for the given confusion matrix."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions, labels) -> ConfusionMatrix:
    """Counts with solved (True) as the positive class."""
    p = np.asarray(predictions, dtype=bool).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise ValueError("cannot score an empty prediction set")
    tp = int(np.count_nonzero(p & y))
    fp = int(np.count_nonzero(p & ~y))
    fn = int(np.count_nonzero(~p & y))
    return ConfusionMatrix(tp, fp, int(p.size) - tp - fp - fn, fn)


def balanced_accuracy(c: ConfusionMatrix, exact: bool = False):
    """Mean of sensitivity ``tp/(tp+fn)`` and specificity ``tn/(tn+fp)``.

    Computed in rational arithmetic; ``exact=True`` returns the Fraction.
    """
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("balanced accuracy undefined: no positive (solved) labels")
    if c.tn + c.fp == 0:
        raise UndefinedMetricError("balanced accuracy undefined: no negative (unsolved) labels")
    value = (Fraction(c.tp, c.tp + c.fn) + Fraction(c.tn, c.tn + c.fp)) / 2
    return value if exact else float(value)


def precision(c: ConfusionMatrix, exact: bool = False):
    """``tp / (tp + fp)``; raises when nothing was predicted positive."""
    if c.tp + c.fp == 0:
        raise UndefinedMetricError("precision undefined: no positive predictions")
    value = Fraction(c.tp, c.tp + c.fp)
    return value if exact else float(value)


def stratified_kfold(labels, k: int, seed: int = 0) -> np.ndarray:
    """Fold id (0..k-1) for every row.

    Each class is shuffled with a Philox stream and dealt round-robin; the
    dealing position carries over from one class to the next, so fold
    sizes also differ by at most one.
    """
    y = np.asarray(labels).ravel()
    if k < 2:
        raise ValueError("k must be at least 2")
    classes, counts = np.unique(y, return_counts=True)
    for cls, cnt in zip(classes, counts):
        if cnt < k:
            raise ValueError(f"class {cls!r} has {cnt} member(s), fewer than k={k}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    folds = np.empty(y.shape[0], dtype=np.int64)
    start = 0
    for cls in classes:
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        folds[idx] = (start + np.arange(idx.shape[0])) % k
        start = (start + idx.shape[0]) % k
    return folds


@dataclass(frozen=True)
class FoldScore:
    fold: int
    balanced_accuracy: float
    precision: float
    error: str | None = None


def _stats(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or np.isnan(v).any():
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std())


@dataclass(frozen=True)
class CVResult:
    params: Hyperparameters
    folds: tuple[FoldScore, ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def balanced_accuracy(self) -> tuple[float, float]:
        return _stats([f.balanced_accuracy for f in self.folds])

    @property
    def precision(self) -> tuple[float, float]:
        return _stats([f.precision for f in self.folds])

    @property
    def score(self) -> float:
        """Mean of the two metric means; NaN when any fold was undefined."""
        return 0.5 * (self.balanced_accuracy[0] + self.precision[0])

    @property
    def errors(self) -> list[str]:
        return [f"fold {f.fold}: {f.error}" for f in self.folds if f.error]


def _score_fold(model, X, y, fold: int) -> FoldScore:
    c = confusion(model.predict(X), y)
    try:
        ba = balanced_accuracy(c)
    except UndefinedMetricError as exc:
        return FoldScore(fold, float("nan"), float("nan"), str(exc))
    try:
        pr = precision(c)
    except UndefinedMetricError as exc:
        return FoldScore(fold, ba, float("nan"), str(exc))
    return FoldScore(fold, ba, pr)


class _Folds:
    """Train/validation index pairs with binned training matrices built once."""

    def __init__(self, X: np.ndarray, y: np.ndarray, k: int, seed: int, trees: bool):
        self.X, self.y, self.k = X, y, k
        assign = stratified_kfold(y, k, seed)
        self.train = [np.flatnonzero(assign != f) for f in range(k)]
        self.valid = [np.flatnonzero(assign == f) for f in range(k)]
        self.binned = [BinnedMatrix(X[tr]) for tr in self.train] if trees else None

    def evaluate(self, h: Hyperparameters, f: int) -> FoldScore:
        tr, va = self.train[f], self.valid[f]
        data = self.X[tr] if self.binned is None or h.algorithm in LINEAR else self.binned[f]
        model = fit(data, self.y[tr], h)
        return _score_fold(model, self.X[va], self.y[va], f)


def _as_arrays(matrix, labels=None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(matrix, FeatureMatrix):
        X, y = matrix.values, matrix.labels if labels is None else labels
    else:
        X, y = matrix, labels
    if y is None:
        raise ValueError("labels are required")
    return np.ascontiguousarray(X, dtype=np.float64), np.asarray(y, dtype=bool)


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def _run(tasks: Sequence[Callable[[], object]], threads: int | None):
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map preserves submission order, so aggregation is deterministic
        return list(pool.map(lambda t: t(), tasks))


def cross_validate(matrix, h: Hyperparameters, k: int = 5, seed: int = 0, labels=None,
                   threads: int | None = 1) -> CVResult:
    """Stratified k-fold scores of one configuration.

    Undefined metrics on a fold are recorded on that fold (``error``) and
    turn the corresponding mean into NaN rather than a silent zero.
    """
    X, y = _as_arrays(matrix, labels)
    folds = _Folds(X, y, k, seed, trees=h.algorithm not in LINEAR)
    scores = _run([lambda f=f: folds.evaluate(h, f) for f in range(k)], threads)
    return CVResult(h, tuple(scores))


@dataclass(frozen=True)
class GridResult:
    results: tuple[CVResult, ...]
    k: int
    seed: int

    def __len__(self) -> int:
        return len(self.results)

    @property
    def winner_index(self) -> int:
        """Highest combined score; ties by balanced accuracy, then declaration order."""
        best, key = None, None
        for i, r in enumerate(self.results):
            s, ba = r.score, r.balanced_accuracy[0]
            if np.isnan(s):
                continue
            cand = (s, ba)
            if key is None or cand > key:
                best, key = i, cand
        if best is None:
            raise UndefinedMetricError("no configuration produced defined metrics on every fold")
        return best

    @property
    def winner(self) -> CVResult:
        return self.results[self.winner_index]

    def to_csv(self) -> str:
        """One row per configuration and fold; floats written with ``repr``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config", "algorithm", "params", "fold", "balanced_accuracy",
                    "precision", "error"])
        for i, r in enumerate(self.results):
            label = r.params.label()
            for f in r.folds:
                w.writerow([i, r.params.algorithm, label, f.fold, repr(f.balanced_accuracy),
                            repr(f.precision), f.error or ""])
        return buf.getvalue()

    def summary(self) -> dict:
        rows = []
        for i, r in enumerate(self.results):
            ba, ba_sd = r.balanced_accuracy
            pr, pr_sd = r.precision
            rows.append({"config": i, "params": r.params.to_dict(), "label": r.params.label(),
                         "balanced_accuracy_mean": ba, "balanced_accuracy_sd": ba_sd,
                         "precision_mean": pr, "precision_sd": pr_sd, "score": r.score,
                         "errors": r.errors})
        try:
            win = self.winner_index
        except UndefinedMetricError:
            win = None
        return {"k": self.k, "seed": self.seed, "n_configs": len(self.results),
                "winner": win, "configs": rows}

    def to_json(self) -> str:
        return json.dumps(_nan_to_none(self.summary()), indent=2, sort_keys=True)


def _nan_to_none(obj):
    if isinstance(obj, float) and np.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def grid_search(matrix, grid: Sequence[Hyperparameters], k: int = 5, seed: int = 0,
                labels=None, threads: int | None = 1) -> GridResult:
    """Cross-validate every configuration on the same folds.

    Parameters
    ----------
    matrix : FeatureMatrix or ndarray
        Training rows only; the held-out split is never seen here.
    grid : sequence of Hyperparameters
        Evaluated in the given order, which is also the final tie-break.
    threads : int, optional
        Worker threads over (configuration, fold) tasks; ``None`` uses all cores.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must contain at least one configuration")
    X, y = _as_arrays(matrix, labels)
    trees = any(h.algorithm not in LINEAR for h in grid)
    folds = _Folds(X, y, k, seed, trees=trees)
    tasks = [lambda h=h, f=f: folds.evaluate(h, f) for h in grid for f in range(k)]
    scores = _run(tasks, threads)
    results = tuple(CVResult(h, tuple(scores[i * k:(i + 1) * k])) for i, h in enumerate(grid))
    return GridResult(results, k, seed)


@dataclass(frozen=True)
class HoldoutScore:
    balanced_accuracy: float
    precision: float
    confusion: ConfusionMatrix
    error: str | None = None


def holdout_score(model, X, y) -> HoldoutScore:
    X, y = _as_arrays(X, y)
    c = confusion(model.predict(X), y)
    s = _score_fold(model, X, y, 0)
    return HoldoutScore(s.balanced_accuracy, s.precision, c, s.error)


@dataclass(frozen=True)
class StateResult:
    state: str
    n_train: int
    n_test: int
    n_fits: int
    best: Hyperparameters | None = None
    test_balanced_accuracy: float = float("nan")
    test_precision: float = float("nan")
    skipped: str | None = None
    top_features: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class SweepResult:
    states: tuple[StateResult, ...]
    seed: int
    k: int
    configs_per_state: int

    @property
    def n_fits(self) -> int:
        """Grid configurations searched, summed over states."""
        return sum(s.n_fits for s in self.states)

    def scored(self) -> list[StateResult]:
        return [s for s in self.states if s.skipped is None
                and np.isfinite(s.test_balanced_accuracy) and np.isfinite(s.test_precision)]

    def correlation(self) -> float:
        """Pearson correlation of test balanced accuracy and precision across states."""
        ok = self.scored()
        if len(ok) < 3:
            return float("nan")
        a = np.array([s.test_balanced_accuracy for s in ok])
        b = np.array([s.test_precision for s in ok])
        if a.std() == 0 or b.std() == 0:
            return float("nan")
        return float(np.corrcoef(a, b)[0, 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "n_train", "n_test", "n_fits", "best", "test_balanced_accuracy",
                    "test_precision", "skipped", "top_features"])
        for s in self.states:
            top = ";".join(f"{n}={v!r}" for n, v in s.top_features)
            w.writerow([s.state, s.n_train, s.n_test, s.n_fits,
                        "" if s.best is None else s.best.label(),
                        repr(s.test_balanced_accuracy), repr(s.test_precision),
                        s.skipped or "", top])
        return buf.getvalue()

    def summary(self) -> dict:
        return _nan_to_none({
            "seed": self.seed, "k": self.k, "configs_per_state": self.configs_per_state,
            "n_states": len(self.states), "n_fits": self.n_fits,
            "n_skipped": sum(s.skipped is not None for s in self.states),
            "correlation": self.correlation(),
        })


def _sweep_state(state: str, d: Dataset, grid, k, seed, train_fraction, age_edges,
                 explain_rows: int) -> StateResult:
    if len(d) < 2:
        return StateResult(state, len(d), 0, 0, skipped="fewer than 2 records")
    split = shuffled_split(d, train_fraction, seed)
    y_train = split.train.labels
    n_pos = int(y_train.sum())
    n_neg = len(y_train) - n_pos
    if n_pos == 0 or n_neg == 0:
        return StateResult(state, len(split.train), len(split.test), 0,
                           skipped="single class in training split")
    if min(n_pos, n_neg) < k:
        return StateResult(state, len(split.train), len(split.test), 0,
                           skipped=f"minority class has {min(n_pos, n_neg)} < k={k} rows")
    schema = fit_schema(split.train, age_edges)
    train, test = encode(split.train, schema), encode(split.test, schema)
    result = grid_search(train, grid, k, seed, threads=1)
    try:
        best = result.winner.params
    except UndefinedMetricError as exc:
        return StateResult(state, len(split.train), len(split.test), len(grid), skipped=str(exc))
    model = fit(train, None, best)
    score = holdout_score(model, test.values, test.labels)
    top: tuple = ()
    if explain_rows > 0:
        from .shapley import explain, mean_abs_shap
        rows = test.values[:explain_rows]
        top = tuple(mean_abs_shap(explain(model, rows, feature_names=schema.names))[:5])
    return StateResult(state, len(split.train), len(split.test), len(grid), best,
                       score.balanced_accuracy, score.precision, score.error, top)


def state_sweep(d: Dataset, grid: Sequence[Hyperparameters] | None = None, k: int = 5,
                seed: int = 0, train_fraction: float = 0.7,
                age_edges: Sequence[int] = DEFAULT_AGE_EDGES, threads: int | None = 1,
                explain_rows: int = 0) -> SweepResult:
    """Per-state grid search, refit of the winner and held-out scoring.

    States whose training split lacks a class (or has fewer than ``k``
    minority rows) are recorded as skipped. The monthly-overlap flag is
    computed on the full input before partitioning when absent.
    """
    grid = list(expand_grid("xgboost", STATE_GRID) if grid is None else grid)
    if "monthly_overlap" not in d.frame.columns:
        d = with_monthly_overlap(d)
    parts = partition_by_state(d)
    tasks = [lambda s=s, p=p: _sweep_state(s, p, grid, k, seed, train_fraction, age_edges,
                                           explain_rows)
             for s, p in parts.items()]
    states = _run(tasks, threads)
    return SweepResult(tuple(states), seed, k, len(grid))
