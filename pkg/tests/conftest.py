import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[str, str] = {}
_started = time.perf_counter()
SUITE_BUDGET_S = 60.0
PROPERTY_CRITERION = "property suites"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _criteria[marker] = outcome if _criteria.get(marker) in (None, "PASS") else _criteria[marker]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = m.args[0]


def pytest_sessionfinish(session, exitstatus):
    # the wall-time budget applies to the whole suite, so it is judged here rather than inside a test
    if PROPERTY_CRITERION not in _criteria:
        return
    elapsed = time.perf_counter() - _started
    _criteria[f"full suite wall time {elapsed:.1f} s < {SUITE_BUDGET_S:.0f} s"] = (
        "PASS" if elapsed < SUITE_BUDGET_S else "FAIL")
    if elapsed >= SUITE_BUDGET_S:
        _criteria[PROPERTY_CRITERION] = "FAIL"
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _criteria.items():
        terminalreporter.write_line(f"{outcome:4}  {name}")


@pytest.fixture(scope="session")
def fixture_raw(tmp_path_factory):
    from kgaudit.synthetic import write_synthetic
    return write_synthetic(tmp_path_factory.mktemp("raw"))


def preprocess_args(raw, out_dir, *extra):
    return ["preprocess", "--out-dir", str(out_dir),
            "--interactions", str(raw["interactions"]), "--kg-triples", str(raw["kg_triples"]),
            "--entity-types", str(raw["entity_types"]), "--user-attributes", str(raw["user_attributes"]),
            "--product-providers", str(raw["product_providers"]),
            "--provider-attributes", str(raw["provider_attributes"]),
            "--category-relation", "belongs_to",
            "--min-user-interactions", "5", "--min-product-interactions", "3", *extra]


@pytest.fixture(scope="session")
def pipeline_dir(fixture_raw, tmp_path_factory):
    """Output directory after preprocess, split and baseline on the synthetic fixture."""
    from kgaudit.cli import main
    out = tmp_path_factory.mktemp("pipeline")
    assert main(preprocess_args(fixture_raw, out)) == 0
    assert main(["split", "--out-dir", str(out)]) == 0
    assert main(["baseline", "--out-dir", str(out)]) == 0
    return out
