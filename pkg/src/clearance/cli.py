"""Command-line front end.

Every command writes its artifacts plus a ``run.json`` manifest (resolved
options, seeds, library versions and SHA-256 of each output) under
``--out`` and nowhere else. Options may also come from a JSON file given
with ``--config``; flags on the command line win.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset as ds
from . import evaluation as ev
from . import features as ft
from . import linkage as lk
from . import reports, shapley, synth
from .models import (
    ALGORITHMS, STATE_GRID, Hyperparameters, dumps_model, expand_grid, fit,
    loads_model,
)

logger = logging.getLogger("clearance")

_PARAM_TYPES = {
    "n_estimators": int, "learning_rate": float, "max_depth": int, "criterion": str,
    "gamma": float, "reg_lambda": float, "min_child_weight": float, "C": float,
    "l1_ratio": float,
}


class CLIError(Exception):
    pass


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, out: str, command: str, options: dict):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.options = options
        self.outputs: dict[str, str] = {}

    def write(self, name: str, text: str) -> Path:
        if Path(name).name != name:
            raise CLIError(f"refusing to write outside the output directory: {name}")
        path = self.out / name
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.outputs[name] = hashlib.sha256(data).hexdigest()
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def finish(self, **extra) -> None:
        import numba
        import pandas
        manifest = {
            "command": self.command,
            "options": self.options,
            "seed": self.options.get("seed"),
            "versions": {"clearance": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "pandas": pandas.__version__,
                         "numba": numba.__version__},
            "outputs": dict(sorted(self.outputs.items())),
            **extra,
        }
        path = self.out / "run.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n",
                        encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        f = float(obj)
        return None if np.isnan(f) else f
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _clean(obj):
    if isinstance(obj, float) and np.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


# ---------------------------------------------------------------- helpers

def _load(args) -> ds.Dataset:
    d = ds.load_map_csv(args.map, count_base=args.count_base)
    return ft.with_monthly_overlap(ds.filter_unknown_age(d))


def _age_edges(args):
    return tuple(args.age_edges) if args.age_edges else ft.DEFAULT_AGE_EDGES


def _split_encode(d, args, exclude=()):
    split = ds.shuffled_split(d, args.train_fraction, args.seed)
    schema = ft.fit_schema(split.train, _age_edges(args), exclude=exclude)
    return split, schema, ft.encode(split.train, schema), ft.encode(split.test, schema)


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in _PARAM_TYPES if getattr(args, k, None) is not None}


def _params(args) -> Hyperparameters:
    return Hyperparameters(args.algo, seed=args.seed, **_overrides(args))


def _parse_grid(entries, base: dict | None) -> dict | None:
    grid = dict(base) if base else {}
    for entry in entries or ():
        key, sep, values = entry.partition("=")
        if not sep or key not in _PARAM_TYPES:
            raise CLIError(f"bad --grid entry {entry!r}; expected KEY=V1,V2 with KEY in "
                           f"{sorted(_PARAM_TYPES)}")
        grid[key] = [v for v in values.split(",") if v]
    for key, values in grid.items():
        if key not in _PARAM_TYPES:
            raise CLIError(f"unknown grid key {key!r}")
        grid[key] = tuple(_PARAM_TYPES[key](v) for v in values)
        if not grid[key]:
            raise CLIError(f"grid key {key!r} has no values")
    return grid or None


def _holdout(model, test) -> dict:
    s = ev.holdout_score(model, test.values, test.labels)
    c = s.confusion
    return _clean({"balanced_accuracy": s.balanced_accuracy, "precision": s.precision,
                   "error": s.error, "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn,
                   "n_test": c.n})


def _options(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------- commands

def cmd_synth_fixture(args, run: Run) -> dict:
    if args.rows < 1:
        raise CLIError("--rows must be at least 1")
    fx = synth.make_map_frame(args.rows, seed=args.seed)
    run.write("map.csv", fx.frame.to_csv(index=False, lineterminator="\n"))
    wp = synth.make_wp_frame(fx.frame, share=args.wp_share, seed=args.seed)
    run.write("wp.csv", wp.to_csv(index=False, lineterminator="\n"))
    return {"rows": args.rows, "wp_rows": len(wp)}


def cmd_ingest(args, run: Run) -> dict:
    raw = ds.load_map_csv(args.map, count_base=args.count_base)
    kept = ds.filter_unknown_age(raw)
    out = kept.frame.copy()
    out["victim_age"] = out["victim_age"].astype("Int64")
    run.write("records.csv", out.to_csv(index=False, lineterminator="\n"))
    info = {"provenance": raw.provenance.as_dict(), "after_age_filter": len(kept),
            "target_disagreements": ds.target_disagreements(raw)}
    run.write_json("ingest.json", info)
    return {"rows_kept": len(kept)}


def cmd_summarize(args, run: Run) -> dict:
    raw = ds.load_map_csv(args.map, count_base=args.count_base)
    run.write("yearly.csv", reports.frame_csv(reports.yearly_counts(raw)))
    run.write("states.csv", reports.frame_csv(reports.state_ratios(raw)))
    kept = ds.filter_unknown_age(raw)
    summary = {"all_records": reports.totals(raw), "known_age_records": reports.totals(kept)}
    run.write_json("summary.json", summary)
    return summary["all_records"]


def cmd_train(args, run: Run) -> dict:
    d = _load(args)
    split, schema, train, test = _split_encode(d, args)
    model = fit(train, None, _params(args))
    run.write("model.json", dumps_model(model) + "\n")
    run.write("schema.json", schema.to_json() + "\n")
    metrics = _holdout(model, test)
    run.write_json("metrics.json", metrics)
    return {"n_train": len(split.train), "n_test": len(split.test),
            "schema_digest": schema.digest(), **metrics}


def cmd_gridsearch(args, run: Run) -> dict:
    d = _load(args)
    split, schema, train, test = _split_encode(d, args)
    grid = _parse_grid(args.grid, args.grid_config)
    fixed = {k: v for k, v in _overrides(args).items() if not grid or k not in grid}
    configs = expand_grid(args.algo, grid, seed=args.seed, **fixed)
    result = ev.grid_search(train, configs, args.k, args.seed, threads=args.threads)
    run.write("grid.csv", result.to_csv())
    run.write("grid.json", result.to_json() + "\n")
    out = {"n_configs": len(configs), "n_train": len(split.train)}
    try:
        best = result.winner.params
    except ev.UndefinedMetricError as exc:
        out["winner"] = None
        out["winner_error"] = str(exc)
        return out
    model = fit(train, None, best)
    run.write("model.json", dumps_model(model) + "\n")
    run.write("schema.json", schema.to_json() + "\n")
    run.write_json("metrics.json", _holdout(model, test))
    out["winner"] = best.label()
    return out


def cmd_sweep_states(args, run: Run) -> dict:
    d = _load(args)
    grid = _parse_grid(args.grid, args.grid_config) or STATE_GRID
    configs = expand_grid("xgboost", grid, seed=args.seed, **_overrides(args))
    result = ev.state_sweep(d, configs, args.k, args.seed, args.train_fraction, _age_edges(args),
                            threads=args.threads, explain_rows=args.explain_rows)
    run.write("sweep.csv", result.to_csv())
    run.write_json("sweep.json", result.summary())
    return result.summary()


def _explain_rows(model, schema, rows, background, mode):
    names = schema.names
    if mode == "interventional" or not hasattr(model, "trees"):
        return shapley.explain(model, rows, background, mode="interventional", feature_names=names)
    return shapley.explain(model, rows, None, mode=mode, feature_names=names)


def _write_explanations(run: Run, prefix: str, expl, rows, top_k: int, n_local: int):
    ranked = shapley.mean_abs_shap(expl)
    run.write(f"{prefix}explanations.csv", reports.explanations_csv(expl))
    run.write(f"{prefix}shap_summary.csv", reports.ranking_csv(ranked))
    run.write(f"{prefix}shap_summary.svg", reports.bar_chart_svg(ranked))
    local = []
    for i in range(min(n_local, len(expl))):
        rep = shapley.local_report(expl[i], top_k, rows[i])
        local.append(f"# row {expl[i].row_id}\n" + reports.local_report_text(rep))
    if local:
        run.write(f"{prefix}local_reports.txt", "\n".join(local))
    return ranked


def cmd_explain(args, run: Run) -> dict:
    model_dir = Path(args.model_dir)
    model = loads_model((model_dir / "model.json").read_text(encoding="utf-8"))
    schema = ft.FeatureSchema.from_json((model_dir / "schema.json").read_text(encoding="utf-8"))
    d = _load(args)
    split = ds.shuffled_split(d, args.train_fraction, args.seed)
    test = ft.encode(split.test, schema)
    if model.schema_digest is not None and model.schema_digest != schema.digest():
        raise CLIError("model and schema files do not belong together")
    n = test.n_rows if args.rows is None else min(args.rows, test.n_rows)
    rows = test.values[:n]
    background = None
    if args.mode == "interventional" or not hasattr(model, "trees"):
        train = ft.encode(split.train, schema)
        rng = np.random.Generator(np.random.Philox(args.seed))
        pick = np.sort(rng.choice(train.n_rows, size=min(args.background, train.n_rows),
                                  replace=False))
        background = train.values[pick]
    expl = _explain_rows(model, schema, rows, background, args.mode)
    expl = shapley.ExplanationSet(expl.phi, expl.base_value, expl.margins, expl.feature_names,
                                  split.test.frame["id"].to_numpy()[:n])
    ranked = _write_explanations(run, "", expl, rows, args.top_k, args.local)
    return {"rows_explained": n, "base_value": expl.base_value,
            "max_additivity_gap": expl.max_additivity_gap(), "top_feature": ranked[0][0]}


def cmd_match(args, run: Run) -> dict:
    dispositions = None
    if args.dispositions:
        dispositions = json.loads(Path(args.dispositions).read_text(encoding="utf-8"))
    d = _load(args)
    map_side = lk.map_link_table(d)
    wp_side = lk.wp_link_table(lk.load_wp_csv(args.wp, dispositions))
    link = lk.match_datasets(map_side, wp_side)
    run.write("matched_pairs.csv", lk.pairs_csv(link, map_side, wp_side))
    run.write_json("link_summary.json", _clean(link.summary()))
    out = {"matched": link.matched, "agree": link.agree}
    if args.refit:
        # robustness refit: WP outcomes on matched rows, no decade indicators
        for prefix, data in (("baseline_", d), ("robustness_", lk.override_outcomes(link, d))):
            split, schema, train, test = _split_encode(data, args, exclude=("Decade",))
            model = fit(train, None, _params(args))
            n = min(args.rows, test.n_rows)
            expl = shapley.explain(model, test.values[:n], None, feature_names=schema.names)
            ranked = _write_explanations(run, prefix, expl, test.values[:n], 10, 0)
            run.write_json(f"{prefix}metrics.json", _holdout(model, test))
            out[f"{prefix}top5"] = [name for name, _ in ranked[:5]]
    return out


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file of option defaults; flags override it")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    if data:
        p.add_argument("--map", required=True, help="MAP-schema CSV")
        p.add_argument("--count-base", default="auto", choices=("auto", "total", "additional"))
        p.add_argument("--train-fraction", type=float, default=0.7)
        p.add_argument("--age-edges", type=int, nargs="+", default=None,
                       help="upper edges of the age bins (default 5 10 ... 100)")


def _model_flags(p: argparse.ArgumentParser, algo_default: str | None = "xgboost") -> None:
    if algo_default is not None:
        p.add_argument("--algo", choices=ALGORITHMS, default=algo_default)
    p.add_argument("--n-estimators", dest="n_estimators", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--criterion", choices=("gini", "entropy"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--reg-lambda", dest="reg_lambda", type=float)
    p.add_argument("--min-child-weight", dest="min_child_weight", type=float)
    p.add_argument("--C", dest="C", type=float)
    p.add_argument("--l1-ratio", dest="l1_ratio", type=float)


def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=5, help="cross-validation folds")
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                   help="replace one grid axis; repeatable")
    p.set_defaults(grid_config=None)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="clearance", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["ingest"] = sub.add_parser("ingest", help="validate and clean a MAP CSV")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = subs["synth-fixture"] = sub.add_parser("synth-fixture",
                                               help="write synthetic MAP and WP files")
    _common(p, data=False)
    p.add_argument("--rows", type=int, default=5000)
    p.add_argument("--wp-share", type=float, default=0.3)
    p.set_defaults(func=cmd_synth_fixture)

    p = subs["train"] = sub.add_parser("train", help="fit one configuration and score the test split")
    _common(p)
    _model_flags(p)
    p.set_defaults(func=cmd_train)

    p = subs["gridsearch"] = sub.add_parser("gridsearch",
                                            help="cross-validated grid search on the train split")
    _common(p)
    _model_flags(p)
    _grid_flags(p)
    p.set_defaults(func=cmd_gridsearch)

    p = subs["sweep-states"] = sub.add_parser("sweep-states",
                                              help="per-state XGBoost grid search")
    _common(p)
    _model_flags(p, algo_default=None)
    _grid_flags(p)
    p.add_argument("--explain-rows", type=int, default=0,
                   help="test rows per state used for a mean |SHAP| ranking")
    p.set_defaults(func=cmd_sweep_states)

    p = subs["explain"] = sub.add_parser("explain", help="SHAP attributions for test rows")
    _common(p)
    p.add_argument("--model-dir", required=True,
                   help="directory holding model.json and schema.json")
    p.add_argument("--rows", type=int, default=None, help="explain the first N test rows")
    p.add_argument("--mode", choices=(shapley.PATH_DEPENDENT, shapley.INTERVENTIONAL),
                   default=shapley.PATH_DEPENDENT)
    p.add_argument("--background", type=int, default=100,
                   help="training rows used as background (interventional mode)")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--local", type=int, default=5, help="local reports for the first N rows")
    p.set_defaults(func=cmd_explain)

    p = subs["match"] = sub.add_parser("match", help="link MAP records with a WP-schema file")
    _common(p)
    _model_flags(p)
    p.add_argument("--wp", required=True, help="WP-schema CSV")
    p.add_argument("--dispositions", help="JSON object mapping disposition text to solved")
    p.add_argument("--refit", action="store_true",
                   help="also refit with WP outcomes and compare SHAP rankings")
    p.add_argument("--rows", type=int, default=2000, help="test rows explained when refitting")
    p.set_defaults(func=cmd_match)

    p = subs["summarize"] = sub.add_parser("summarize",
                                           help="yearly and per-state solved counts")
    _common(p)
    p.set_defaults(func=cmd_summarize)
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise CLIError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        if isinstance(cfg.get("grid"), dict):
            # {"key": [values]} form; a list keeps the KEY=V1,V2 form of --grid
            cfg["grid_config"] = cfg.pop("grid")
        known = set(vars(args))
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise CLIError(f"unknown config key(s) {unknown} for {args.command}")
        subs[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CLIError as exc:
        print(f"clearance: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise CLIError("--threads must be at least 1")
        run = Run(args.out, args.command, _options(args))
        extra = args.func(args, run)
        run.finish(result=_clean(extra))
    except Exception as exc:  # noqa: BLE001 - reported as one line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"clearance: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
