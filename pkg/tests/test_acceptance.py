"""Acceptance suite: one test per criterion, summarised at the end of the run.

Criteria 1-7 run on synthetic fixtures. Criteria 8-12 need the public MAP
file (``MAP_CSV``) and, for the linkage check, the WP file (``WP_CSV``);
they are marked ``desk`` and skip when those variables are unset.
"""
import json
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from clearance import cli
from clearance import dataset as ds
from clearance import evaluation as ev
from clearance import features as ft
from clearance import linkage as lk
from clearance import shapley as sh
from clearance import synth
from clearance.models import (
    Hyperparameters, LinearModel, fit, log_loss, objective, objective_gradient, predict_margin,
)
from conftest import desk_paths
from oracles import hand_balanced_accuracy, hand_confusion, hand_precision, pairwise_link

criterion = pytest.mark.criterion


def random_ensemble(rng, max_p=12, max_depth=3, max_trees=5, n=150):
    p = int(rng.integers(1, max_p + 1))
    X = rng.integers(0, 3, size=(n, p)).astype(float)
    w = rng.normal(size=p)
    y = (X @ w + rng.normal(0, 1, n) > np.median(X @ w)).astype(int)
    algo = str(rng.choice(["xgboost", "gbm", "decision_tree"]))
    h = Hyperparameters(algo, n_estimators=int(rng.integers(1, max_trees + 1)),
                        max_depth=int(rng.integers(1, max_depth + 1)),
                        learning_rate=float(rng.uniform(0.05, 1.0)))
    return fit(X, y, h), X


# ---------------------------------------------------------------- property suite

@criterion(1, "tree_shap equals exact enumeration on 100 random ensembles")
def test_shap_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        m, X = random_ensemble(rng)
        rows, bg = X[:2], X[100:110]
        path = sh.tree_shap(m, rows)
        interv = sh.tree_shap(m, rows, background=bg, mode=sh.INTERVENTIONAL)
        for i in range(len(rows)):
            ep = sh.exact_shapley(m, rows[i], mode=sh.PATH_DEPENDENT)
            ei = sh.exact_shapley(m, rows[i], bg)
            worst = max(worst, np.max(np.abs(ep.phi - path.phi[i])),
                        np.max(np.abs(ei.phi - interv.phi[i])))
    print(f"max |dphi| = {worst:.3e}")
    assert worst < 1e-9


@criterion(2, "local accuracy on 10,000 explanations")
def test_local_accuracy():
    rng = np.random.default_rng(7)
    gaps, count = [], 0
    while count < 10_000:
        m, X = random_ensemble(rng, n=400)
        rows = rng.integers(0, 3, size=(500, X.shape[1])).astype(float)
        if count % 2000 == 0:
            e = sh.tree_shap(m, rows, background=X[:20], mode=sh.INTERVENTIONAL)
        else:
            e = sh.tree_shap(m, rows)
        margin = predict_margin(m, rows)
        gaps.append(np.max(np.abs(e.base_value + e.phi.sum(axis=1) - margin)))
        count += len(rows)
    lin = LinearModel(rng.normal(size=6), float(rng.normal()), "l2", 1.0, 0.5)
    rows = rng.normal(size=(200, 6))
    e = sh.linear_shap(lin, rows, rng.normal(size=(50, 6)))
    gaps.append(np.max(np.abs(e.base_value + e.phi.sum(axis=1) - lin.predict_margin(rows))))
    print(f"explanations = {count + 200}, max gap = {max(gaps):.3e}")
    assert max(gaps) < 1e-9


@criterion(3, "metrics match hand-computed confusion matrices exactly")
def test_metric_correctness():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(4, 200))
        y = rng.random(n) < rng.uniform(0.1, 0.9)
        y[:2] = [True, False]
        pred = rng.random(n) < rng.uniform(0.1, 0.9)
        pred[0] = True
        tp, fp, tn, fn = hand_confusion(pred, y)
        c = ev.confusion(pred, y)
        assert (c.tp, c.fp, c.tn, c.fn) == (tp, fp, tn, fn)
        ba = ev.balanced_accuracy(c, exact=True)
        pr = ev.precision(c, exact=True)
        assert isinstance(ba, Fraction) and ba == hand_balanced_accuracy(tp, fp, tn, fn)
        assert isinstance(pr, Fraction) and pr == hand_precision(tp, fp)
        assert ev.balanced_accuracy(c) == float(ba) and ev.precision(c) == float(pr)
    never = ev.confusion(np.zeros(5, bool), [1, 0, 1, 0, 0])
    with pytest.raises(ev.UndefinedMetricError):
        ev.precision(never)


@criterion(4, "stratified folds within 1 of ideal on 1,000 label vectors")
def test_stratification():
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(1000):
        k = (2, 5, 10)[i % 3]
        n = int(rng.integers(2 * k, 400))
        n_pos = int(rng.integers(k, n - k + 1))
        y = rng.permutation(np.r_[np.ones(n_pos, int), np.zeros(n - n_pos, int)])
        folds = ev.stratified_kfold(y, k, seed=i)
        for cls in (0, 1):
            counts = np.bincount(folds[y == cls], minlength=k)
            worst = max(worst, np.max(np.abs(counts - np.sum(y == cls) / k)))
    print(f"max deviation from ideal = {worst:.3f}")
    assert worst < 1


@criterion(5, "boosting loss monotone, gamma-monotone leaves, solver gradient")
def test_boosting_sanity():
    rng = np.random.default_rng(5)
    for fixture in range(8):
        n, p = 300, int(rng.integers(2, 8))
        X = rng.integers(0, 4, size=(n, p)).astype(float)
        y = (X[:, 0] - X[:, -1] + rng.normal(0, 1.5, n) > 0).astype(int)
        for algo in ("gbm", "xgboost"):
            m = fit(X, y, Hyperparameters(algo, n_estimators=30, learning_rate=1.0,
                                          max_depth=int(rng.integers(1, 5))))
            margin = np.full(n, m.base_score)
            losses = [log_loss(y, margin)]
            for t in m.trees:
                margin = margin + t.predict(X)
                losses.append(log_loss(y, margin))
            assert np.all(np.diff(losses) <= 1e-12), (fixture, algo)
        leaves = [fit(X, y, Hyperparameters("xgboost", n_estimators=8, max_depth=4,
                                            gamma=g)).n_leaves
                  for g in (0.0, 0.1, 0.5, 2.0, 10.0)]
        assert leaves == sorted(leaves, reverse=True), leaves
        for penalty, algo in (("l2", "ridge"), ("l1", "lasso"), ("elasticnet", "elastic_net")):
            w = rng.normal(size=p)
            w[np.abs(w) < 0.05] = 0.1
            b, C = float(rng.normal()), float(rng.uniform(0.1, 10))
            gw, gb = objective_gradient(w, b, X, y, penalty, C, 0.3)
            eps = 1e-6
            num = np.empty(p + 1)
            for j in range(p):
                e = np.zeros(p)
                e[j] = eps
                num[j] = (objective(w + e, b, X, y, penalty, C, 0.3)
                          - objective(w - e, b, X, y, penalty, C, 0.3)) / (2 * eps)
            num[p] = (objective(w, b + eps, X, y, penalty, C, 0.3)
                      - objective(w, b - eps, X, y, penalty, C, 0.3)) / (2 * eps)
            analytic = np.r_[gw, gb]
            rel = np.linalg.norm(num - analytic) / np.linalg.norm(num)
            assert rel < 1e-5, (penalty, rel)


@criterion(6, "linkage equals the pairwise oracle on 1,000-row paired data")
def test_linkage(tmp_path):
    fx = synth.make_map_frame(1000, seed=6)
    # plant duplicate keys on both sides
    doubled = pd.concat([fx.frame, fx.frame.iloc[:25]], ignore_index=True)
    doubled.loc[1000:, "ID"] = [f"dup{i}" for i in range(25)]
    wp = synth.make_wp_frame(doubled, share=0.8, seed=6)
    wp = pd.concat([wp, wp.iloc[:15]], ignore_index=True)
    synth.write_csv(doubled, tmp_path / "map.csv")
    synth.write_csv(wp, tmp_path / "wp.csv")
    a = lk.map_link_table(ds.load_map_csv(tmp_path / "map.csv"))
    b = lk.wp_link_table(lk.load_wp_csv(tmp_path / "wp.csv"))
    got = lk.match_datasets(a, b)
    want = pairwise_link(a.keys, b.keys, a.solved.tolist(), b.solved.tolist())
    assert sorted(map(tuple, got.pairs.tolist())) == sorted(want["pairs"])
    assert (got.matched, got.agree) == (want["matched"], want["agree"])
    assert got.map_solved_wp_unsolved == want["a_solved_b_unsolved"]
    assert got.wp_solved_map_unsolved == want["b_solved_a_unsolved"]
    assert got.agree + got.map_solved_wp_unsolved + got.wp_solved_map_unsolved == got.matched
    assert got.matched + got.unmatched_a == len(a) and got.matched + got.unmatched_b == len(b)
    back = lk.match_datasets(b, a)
    assert (back.matched, back.agree) == (got.matched, got.agree)
    assert back.map_solved_wp_unsolved == got.wp_solved_map_unsolved
    assert got.ambiguous_keys > 0
    print(f"matched = {got.matched}, ambiguous keys = {got.ambiguous_keys}")


@criterion(7, "two gridsearch runs with one seed give byte-identical CSVs")
def test_determinism(fixture_dir, tmp_path):
    args = ["gridsearch", "--map", str(fixture_dir / "map.csv"), "--seed", "3", "--k", "5",
            "--grid", "n_estimators=5,20", "--grid", "learning_rate=0.1,0.5",
            "--grid", "gamma=0,1"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a = (tmp_path / "a" / "grid.csv").read_bytes()
    assert a == (tmp_path / "b" / "grid.csv").read_bytes()
    assert a.count(b"\n") == 1 + 8 * 5


# ---------------------------------------------------------------- desk reproduction

MAP_CSV, WP_CSV = desk_paths()
needs_map = pytest.mark.skipif(MAP_CSV is None, reason="MAP_CSV not set")
needs_wp = pytest.mark.skipif(MAP_CSV is None or WP_CSV is None,
                              reason="MAP_CSV and WP_CSV not set")
desk = pytest.mark.desk


@pytest.fixture(scope="module")
def national():
    raw = ds.load_map_csv(MAP_CSV)
    d = ft.with_monthly_overlap(ds.filter_unknown_age(raw))
    split = ds.shuffled_split(d, 0.7, seed=0)
    schema = ft.fit_schema(split.train)
    return raw, d, split, schema, ft.encode(split.train, schema), ft.encode(split.test, schema)


BEST_XGB = Hyperparameters("xgboost", n_estimators=200, learning_rate=0.5, gamma=0.0)


@desk
@needs_map
@criterion(8, "national XGBoost CV within 0.02 of 0.766 / 0.863")
def test_national_cv(national):
    train = national[4]
    cv = ev.cross_validate(train, BEST_XGB, k=5, seed=0, threads=ev.default_threads())
    ba, pr = cv.balanced_accuracy[0], cv.precision[0]
    print(f"balanced accuracy = {ba:.4f}, precision = {pr:.4f}")
    assert abs(ba - 0.766) <= 0.02 and abs(pr - 0.863) <= 0.02


@desk
@needs_map
@criterion(9, "top-4 mean |SHAP| features, Undetermined first")
def test_national_shap(national):
    train, test = national[4], national[5]
    model = fit(train, None, BEST_XGB)
    pick = np.random.default_rng(0).choice(test.n_rows, min(20_000, test.n_rows), replace=False)
    ranked = sh.mean_abs_shap(sh.tree_shap(model, test.values[np.sort(pick)],
                                           feature_names=test.schema.names))
    top4 = [name for name, _ in ranked[:4]]
    print("top-4:", top4)
    assert top4[0] == "Circumstance: Undetermined"
    assert set(top4) == {"Circumstance: Undetermined", "N of Offenders",
                         "Circumstance: Other Arguments", "Victim Sex: Female"}


@desk
@needs_map
@criterion(10, "236,692 unsolved of 804,751 records")
def test_unsolved_share(national):
    raw = national[0]
    n, unsolved = len(raw), int((~raw.labels).sum())
    print(f"records = {n}, unsolved = {unsolved}, share = {unsolved / n:.4%}")
    assert (n, unsolved) == (804_751, 236_692)
    assert round(100 * unsolved / n, 2) == 29.41


@desk
@needs_map
@criterion(11, "state sweep: 612 fits over 51 states, correlation below -0.1")
def test_state_sweep(national):
    d = national[1]
    res = ev.state_sweep(d, k=5, seed=0, threads=ev.default_threads())
    print(json.dumps(res.summary()))
    assert len(res.states) == 51 and res.n_fits == 612
    assert res.correlation() < -0.1


@desk
@needs_wp
@criterion(12, "WP linkage 27,450 / 21,910 / 2,782 or delta within the ambiguity count")
def test_wp_linkage(national):
    raw = national[0]
    link = lk.match_datasets(lk.map_link_table(raw), lk.wp_link_table(lk.load_wp_csv(WP_CSV)))
    got = (link.matched, link.agree, link.wp_solved_map_unsolved)
    want = (27_450, 21_910, 2_782)
    print(json.dumps(link.summary()))
    if got != want:
        delta = max(abs(g - w) for g, w in zip(got, want))
        assert delta <= link.ambiguous_rows, (got, want, link.ambiguous_rows)
