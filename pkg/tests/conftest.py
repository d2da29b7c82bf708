"""Collects the outcome of every acceptance criterion and prints one
PASS/FAIL line per criterion at the end of the session."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = mark.args
        ok = report.passed
        entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "details": []})
        entry["ok"] = entry["ok"] and ok
        details = [v for k, v in item.user_properties if k == "detail"]
        entry["details"].extend(details)
        if report.skipped:
            entry["ok"] = None


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        r = _RESULTS[number]
        status = "SKIP" if r["ok"] is None else ("PASS" if r["ok"] else "FAIL")
        line = f"criterion {number:2d} {status}  {r['title']}"
        if r["details"]:
            line += "  [" + "; ".join(r["details"]) + "]"
        terminalreporter.write_line(line)
