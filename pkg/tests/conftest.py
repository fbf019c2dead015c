import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "ok": True, "ran": False, "why": ""})
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["ok"] = False
        entry["why"] = entry["why"] or f"{item.name} failed during {report.when}"
    elif report.skipped and report.when in ("setup", "call"):
        entry["ok"] = False
        entry["why"] = entry["why"] or f"{item.name} skipped"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        ok = entry["ok"] and entry["ran"]
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {entry['title']}"
        if not ok:
            line += f"  [{entry['why'] or 'not run'}]"
        terminalreporter.write_line(line)
