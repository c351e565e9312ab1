import numpy as np
import pytest

from imsem.core import AxisConfig, Imsc

_acceptance: dict[int, dict] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_axes():
    return AxisConfig(40, 120)


@pytest.fixture
def make_imsc():
    def build(values, retention_max=600.0, rim_max=1.45):
        return Imsc.from_array(np.asarray(values, dtype=float), retention_max, rim_max)

    return build


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, description = marker.args
    entry = _acceptance.setdefault(number, {"description": description, "outcomes": [], "details": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            entry["outcomes"].append("xfail")
        else:
            entry["outcomes"].append(report.outcome)
        entry["details"].extend(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_acceptance):
        entry = _acceptance[number]
        ok = entry["outcomes"] and all(o == "passed" for o in entry["outcomes"])
        status = "PASS" if ok else "FAIL"
        if "xfail" in entry["outcomes"]:
            status = "FAIL (expected; see decisions ledger)"
        tr.write_line(f"[{number}] {status}: {entry['description']}")
        for detail in entry["details"]:
            tr.write_line(f"      {detail}")
