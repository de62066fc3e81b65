import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from clearance import synth  # noqa: E402

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    number, title = crit
    entry = _CRITERIA.setdefault(number, {"title": title, "outcome": "passed", "detail": ""})
    if report.when == "call" or report.outcome != "passed":
        if report.outcome == "failed":
            entry["outcome"] = "failed"
            entry["detail"] = str(report.longrepr).strip().splitlines()[-1][:160]
        elif report.outcome == "skipped" and entry["outcome"] != "failed":
            entry["outcome"] = "skipped"
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
            entry["detail"] = str(reason).replace("Skipped: ", "")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[e["outcome"]]
        line = f"criterion {number:>2} {word}: {e['title']}"
        if e["detail"]:
            line += f" ({e['detail']})"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """Synthetic MAP and WP files shared by integration tests."""
    out = tmp_path_factory.mktemp("fixture")
    fx = synth.make_map_frame(3000, seed=11)
    synth.write_csv(fx.frame, out / "map.csv")
    synth.write_csv(synth.make_wp_frame(fx.frame, seed=11), out / "wp.csv")
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def desk_paths():
    return os.environ.get("MAP_CSV"), os.environ.get("WP_CSV")
