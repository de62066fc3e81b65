from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clearance import dataset as ds
from clearance import evaluation as ev
from clearance import synth
from clearance.models import DEFAULT_GRIDS, STATE_GRID, Hyperparameters, expand_grid
from oracles import hand_balanced_accuracy, hand_confusion, hand_precision


def test_confusion_examples():
    y = np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=bool)
    assert ev.confusion(y, y) == ev.ConfusionMatrix(4, 0, 4, 0)
    allpos = ev.confusion(np.ones(8, dtype=bool), y)
    assert allpos == ev.ConfusionMatrix(tp=4, fp=4, tn=0, fn=0)
    with pytest.raises(ValueError):
        ev.confusion([], [])
    with pytest.raises(ValueError):
        ev.confusion([True], [True, False])


def test_balanced_accuracy_examples():
    assert ev.balanced_accuracy(ev.ConfusionMatrix(5, 0, 5, 0)) == 1.0
    c = ev.ConfusionMatrix(tp=3, fp=4, tn=2, fn=1)
    assert ev.balanced_accuracy(c, exact=True) == (Fraction(3, 4) + Fraction(1, 3)) / 2
    assert ev.balanced_accuracy(c) == pytest.approx(0.5416666666666666, abs=0)
    # everything predicted solved on balanced labels
    assert ev.balanced_accuracy(ev.confusion(np.ones(6, bool), [1, 1, 1, 0, 0, 0])) == 0.5


def test_balanced_accuracy_absent_class():
    with pytest.raises(ev.UndefinedMetricError, match="positive"):
        ev.balanced_accuracy(ev.ConfusionMatrix(0, 1, 1, 0))
    with pytest.raises(ev.UndefinedMetricError, match="negative"):
        ev.balanced_accuracy(ev.ConfusionMatrix(1, 0, 0, 1))


def test_precision_examples():
    assert ev.precision(ev.ConfusionMatrix(3, 0, 1, 1)) == 1.0
    assert ev.precision(ev.ConfusionMatrix(3, 1, 0, 0)) == 0.75
    with pytest.raises(ev.UndefinedMetricError):
        ev.precision(ev.ConfusionMatrix(0, 0, 3, 2))


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
def test_metric_bounds_and_label_swap(pairs):
    pred = np.array([p for p, _ in pairs])
    y = np.array([t for _, t in pairs])
    c = ev.confusion(pred, y)
    assert c.n == len(pairs)
    if y.any() and (~y).any():
        ba = ev.balanced_accuracy(c, exact=True)
        assert 0 <= ba <= 1
        assert ev.balanced_accuracy(ev.confusion(~pred, y), exact=True) == 1 - ba
    if pred.any():
        assert 0 <= ev.precision(c) <= 1


def test_stratified_examples():
    folds = ev.stratified_kfold(np.arange(100) % 2, 5, seed=0)
    assert np.bincount(folds).tolist() == [20] * 5
    y = np.array([1] * 70 + [0] * 30)
    folds = ev.stratified_kfold(y, 5, seed=3)
    for f in range(5):
        assert int(np.sum(y[folds == f])) == 14 and int(np.sum(1 - y[folds == f])) == 6
    assert np.array_equal(ev.stratified_kfold(y, 5, 3), ev.stratified_kfold(y, 5, 3))


def test_stratified_errors():
    with pytest.raises(ValueError, match="fewer than k"):
        ev.stratified_kfold([1, 1, 1, 0], 2, 0)
    with pytest.raises(ValueError):
        ev.stratified_kfold([1, 0] * 5, 1, 0)


@settings(max_examples=80, deadline=None)
@given(n_pos=st.integers(10, 200), n_neg=st.integers(10, 200), k=st.sampled_from([2, 5, 10]),
       seed=st.integers(0, 2**31))
def test_stratification_property(n_pos, n_neg, k, seed):
    y = np.random.default_rng(seed).permutation(np.array([1] * n_pos + [0] * n_neg))
    folds = ev.stratified_kfold(y, k, seed)
    sizes = np.bincount(folds, minlength=k)
    assert sizes.max() - sizes.min() <= 1
    for cls, n in ((1, n_pos), (0, n_neg)):
        counts = np.bincount(folds[y == cls], minlength=k)
        assert np.all(np.abs(counts - n / k) < 1)


def separable(n=120, seed=0):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 3))
    return X, X[:, 0] > 0


def test_cross_validate_separable():
    X, y = separable()
    cv = ev.cross_validate(X, Hyperparameters("decision_tree", max_depth=3), 5, 0, labels=y)
    assert [f.balanced_accuracy for f in cv.folds] == [1.0] * 5
    assert cv.k == 5 and cv.balanced_accuracy == (1.0, 0.0)


def test_cross_validate_surfaces_undefined_precision():
    X, y = separable()
    y = y.copy()
    y[:] = False
    y[:10] = True  # tiny minority that a heavy ridge penalty never predicts
    cv = ev.cross_validate(X, Hyperparameters("ridge", C=1e-4), 5, 0, labels=y)
    assert all("precision undefined" in (f.error or "") for f in cv.folds)
    assert np.isnan(cv.precision[0]) and np.isnan(cv.score)
    assert len(cv.errors) == 5


def test_cross_validate_reproducible():
    X, y = separable(seed=1)
    y = y ^ (np.random.default_rng(0).random(len(y)) < 0.2)
    h = Hyperparameters("xgboost", n_estimators=5, max_depth=2)
    a = ev.cross_validate(X, h, 5, 9, labels=y)
    b = ev.cross_validate(X, h, 5, 9, labels=y, threads=3)
    assert a == b


def test_grid_search_single_and_winner_rule():
    X, y = separable(seed=2)
    y = y ^ (np.random.default_rng(1).random(len(y)) < 0.15)
    single = ev.grid_search(X, [Hyperparameters("decision_tree", max_depth=2)], 3, 0, labels=y)
    assert single.winner_index == 0
    grid = expand_grid("xgboost", {"n_estimators": (3, 6), "learning_rate": (0.1, 0.5)})
    res = ev.grid_search(X, grid, 3, 0, labels=y)
    scores = [(r.score, r.balanced_accuracy[0]) for r in res.results]
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    assert res.winner_index == best
    assert len(res.to_csv().strip().splitlines()) == 1 + len(grid) * 3


def test_grid_tie_break_by_declaration_order():
    X, y = separable(seed=3)
    h = Hyperparameters("decision_tree", max_depth=3)
    res = ev.grid_search(X, [h, h.with_(criterion="entropy"), h], 3, 0, labels=y)
    # identical scores: the first declared configuration wins
    assert res.results[0].score == res.results[2].score
    assert res.winner_index in (0, 1) and res.winner_index != 2


def test_grid_search_empty():
    X, y = separable()
    with pytest.raises(ValueError):
        ev.grid_search(X, [], 5, 0, labels=y)


def test_default_xgboost_grid_size():
    assert len(expand_grid("xgboost")) == 36


def test_state_grid_is_national_grid_without_gamma():
    national = dict(DEFAULT_GRIDS["xgboost"])
    national.pop("gamma")
    assert STATE_GRID == national
    assert len(expand_grid("xgboost", STATE_GRID)) * 51 == 612


def test_state_sweep_counts_and_skips(tmp_path):
    fx = synth.make_map_frame(1500, seed=5)
    # one tiny state with a single class
    extra = fx.frame.iloc[:3].copy()
    extra["State"] = "Wyoming"
    extra["Solved"] = "Yes"
    frame = fx.frame._append(extra, ignore_index=True)
    synth.write_csv(frame, tmp_path / "m.csv")
    d = ds.filter_unknown_age(ds.load_map_csv(tmp_path / "m.csv"))
    grid = expand_grid("xgboost", {"n_estimators": (5, 10), "learning_rate": (0.1, 0.5)})
    res = ev.state_sweep(d, grid, k=3, seed=0)
    states = {s.state: s for s in res.states}
    assert len(states) == 8
    assert states["WYOMING"].skipped and states["WYOMING"].n_fits == 0
    assert res.n_fits == 4 * 7
    assert res.configs_per_state == 4
    for s in res.scored():
        assert 0 <= s.test_balanced_accuracy <= 1 and 0 <= s.test_precision <= 1
    assert -1 <= res.correlation() <= 1
    assert res.to_csv().count("\n") == 9


def test_metrics_match_hand_oracle_exactly():
    r = np.random.default_rng(0)
    for _ in range(20):
        n = int(r.integers(2, 40))
        pred, y = r.random(n) < 0.5, r.random(n) < 0.5
        tp, fp, tn, fn = hand_confusion(pred, y)
        c = ev.confusion(pred, y)
        assert (c.tp, c.fp, c.tn, c.fn) == (tp, fp, tn, fn)
        if tp + fn and tn + fp:
            assert ev.balanced_accuracy(c, exact=True) == hand_balanced_accuracy(tp, fp, tn, fn)
        if tp + fp:
            assert ev.precision(c, exact=True) == hand_precision(tp, fp)
