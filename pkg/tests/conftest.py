"""Collects results of tests marked ``criterion`` and prints one PASS/FAIL line per criterion."""

import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when != "call" and report.passed:
        return
    entry = _criteria.setdefault(marker.args[0], {"ok": True, "notes": []})
    if report.failed or report.skipped:
        entry["ok"] = False
    if report.when == "call":
        entry["notes"] += [str(v) for k, v in item.user_properties if k == "measured"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, entry in _criteria.items():
        status = "PASS" if entry["ok"] else "FAIL"
        notes = "; ".join(entry["notes"])
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({notes})" if notes else ""))
