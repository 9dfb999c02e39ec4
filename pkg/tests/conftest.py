import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        passed = report.passed and not getattr(report, "wasxfail", False)
        prev = _results.get(number, (title, True, []))
        details = prev[2] + [v for k, v in report.user_properties if k == "detail"]
        _results[number] = (title, prev[1] and passed, details)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, passed, details = _results[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {title}")
        for line in details:
            terminalreporter.write_line(f"    {line}")
