import json
import time
from pathlib import Path

import numpy as np
import pytest

from mofblock.dataset import load_dataset

FIXTURES = Path(__file__).parent / "fixtures"


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "seconds": 0.0})
    if report.when in ("setup", "call"):
        entry["seconds"] += report.duration
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {e['title']}  ({e['seconds']:.1f} s)")


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def block_set():
    """20 non-degenerate blocks: (species, global coords, label)."""
    raw = json.loads((FIXTURES / "blocks.json").read_text(encoding="utf-8"))
    return [(b["species"], np.array(b["coords"]), b["smiles"]) for b in raw]


@pytest.fixture(scope="session")
def record_set():
    loaded = load_dataset(FIXTURES / "structures.jsonl")
    assert not loaded.errors
    return loaded.records


@pytest.fixture(scope="session")
def training_runs():
    """Default-config runs on the synthetic scenario for seeds 0-2, plus the
    uniform-policy baseline and the total wall time."""
    from mofblock.policy_sim import Scenario, random_baseline, run_training

    scenario = Scenario.synthetic()
    start = time.perf_counter()
    runs = {seed: run_training(scenario, seed=seed) for seed in range(3)}
    baseline = random_baseline(scenario)
    return {"runs": runs, "baseline": baseline, "seconds": time.perf_counter() - start}
