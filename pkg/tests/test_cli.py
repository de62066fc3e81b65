import json
import subprocess
import sys

import pytest

from clearance import cli

SMALL_GRID = ["--grid", "n_estimators=4,8", "--grid", "learning_rate=0.3",
              "--grid", "max_depth=2", "--grid", "gamma=0"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def manifest(out):
    return json.loads((out / "run.json").read_text())


def test_synth_fixture_and_ingest(tmp_path):
    assert run("synth-fixture", "--out", tmp_path / "fx", "--rows", 300, "--seed", 2) == 0
    assert (tmp_path / "fx" / "map.csv").exists() and (tmp_path / "fx" / "wp.csv").exists()
    assert run("ingest", "--map", tmp_path / "fx" / "map.csv", "--out", tmp_path / "in") == 0
    m = manifest(tmp_path / "in")
    assert m["command"] == "ingest" and "records.csv" in m["outputs"]


def test_bad_rows_exit_nonzero_with_one_line(tmp_path, capsys):
    assert run("synth-fixture", "--out", tmp_path, "--rows", 0) != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("clearance: error:") and "\n" not in err


def test_missing_file_is_reported(tmp_path, capsys):
    assert run("ingest", "--map", tmp_path / "nope.csv", "--out", tmp_path / "o") == 1
    assert "clearance: error:" in capsys.readouterr().err


def test_summarize(fixture_dir, tmp_path):
    assert run("summarize", "--map", fixture_dir / "map.csv", "--out", tmp_path) == 0
    assert (tmp_path / "yearly.csv").read_text().startswith("year,")
    assert set(manifest(tmp_path)["outputs"]) == {"yearly.csv", "states.csv", "summary.json"}


def test_train_then_explain(fixture_dir, tmp_path):
    model_dir = tmp_path / "m"
    assert run("train", "--map", fixture_dir / "map.csv", "--out", model_dir,
               "--n-estimators", 10, "--max-depth", 3) == 0
    res = manifest(model_dir)["result"]
    assert 0 <= res["balanced_accuracy"] <= 1
    assert run("explain", "--map", fixture_dir / "map.csv", "--model-dir", model_dir,
               "--out", tmp_path / "e", "--rows", 50, "--local", 2) == 0
    res = manifest(tmp_path / "e")["result"]
    assert res["rows_explained"] == 50 and res["max_additivity_gap"] < 1e-9
    assert (tmp_path / "e" / "shap_summary.svg").read_text().startswith("<svg")
    assert (tmp_path / "e" / "local_reports.txt").read_text().count("# row") == 2


def test_explain_interventional(fixture_dir, tmp_path):
    model_dir = tmp_path / "m"
    run("train", "--map", fixture_dir / "map.csv", "--out", model_dir, "--algo", "lasso")
    assert run("explain", "--map", fixture_dir / "map.csv", "--model-dir", model_dir,
               "--out", tmp_path / "e", "--rows", 20, "--background", 30) == 0
    assert manifest(tmp_path / "e")["result"]["max_additivity_gap"] < 1e-9


def test_gridsearch_outputs_only_under_out(fixture_dir, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "g"
    assert run("gridsearch", "--map", fixture_dir / "map.csv", "--out", out, "--k", 3,
               *SMALL_GRID) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["g"]
    written = {p.name for p in out.iterdir()}
    assert written == set(manifest(out)["outputs"]) | {"run.json"}
    lines = (out / "grid.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 3


def test_config_defaults_and_flag_override(fixture_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"k": 2, "grid": {"n_estimators": [3], "max_depth": [2]},
                               "seed": 4}))
    out = tmp_path / "g"
    assert run("gridsearch", "--map", fixture_dir / "map.csv", "--out", out,
               "--config", cfg, "--seed", 5) == 0
    m = manifest(out)
    assert m["seed"] == 5 and m["options"]["k"] == 2
    assert (out / "grid.csv").read_text().count("\n") == 1 + 2


def test_config_unknown_key(fixture_dir, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"colour": "red"}')
    assert run("train", "--map", fixture_dir / "map.csv", "--out", tmp_path,
               "--config", cfg) == 2
    assert "colour" in capsys.readouterr().err


def test_manifest_replay_is_byte_identical(fixture_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gridsearch", "--map", fixture_dir / "map.csv", "--out", a, "--k", 3,
               *SMALL_GRID) == 0
    m = manifest(a)
    # replay from the recorded options through a config file
    opts = {k: v for k, v in m["options"].items() if k not in ("out", "config")}
    cfg = tmp_path / "replay.json"
    cfg.write_text(json.dumps(opts))
    assert run("gridsearch", "--map", fixture_dir / "map.csv", "--out", b, "--config", cfg,
               "--threads", 2) == 0
    for name in ("grid.csv", "model.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert manifest(b)["outputs"]["grid.csv"] == m["outputs"]["grid.csv"]


def test_sweep_states(fixture_dir, tmp_path):
    assert run("sweep-states", "--map", fixture_dir / "map.csv", "--out", tmp_path, "--k", 3,
               "--grid", "n_estimators=5", "--grid", "learning_rate=0.5",
               "--grid", "max_depth=2", "--grid", "gamma=0,1") == 0
    res = manifest(tmp_path)["result"]
    assert res["n_states"] == 7
    assert res["n_fits"] == 2 * (res["n_states"] - res["n_skipped"])


def test_match_with_refit(fixture_dir, tmp_path):
    assert run("match", "--map", fixture_dir / "map.csv", "--wp", fixture_dir / "wp.csv",
               "--out", tmp_path, "--refit", "--rows", 40, "--n-estimators", 5) == 0
    summary = json.loads((tmp_path / "link_summary.json").read_text())
    assert summary["matched"] > 0
    assert summary["agree"] + summary["map_solved_wp_unsolved"] + \
        summary["wp_solved_map_unsolved"] == summary["matched"]
    for prefix in ("baseline_", "robustness_"):
        ranked = (tmp_path / f"{prefix}shap_summary.csv").read_text()
        assert "Decade" not in ranked


@pytest.mark.parametrize("argv", [["--version"], ["train", "--help"]])
def test_console_entry(argv):
    p = subprocess.run([sys.executable, "-m", "clearance.cli", *argv], capture_output=True,
                       text=True)
    assert p.returncode == 0 and p.stdout
