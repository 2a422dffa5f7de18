import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    prev = _RESULTS.get(number)
    passed = rep.passed and (prev is None or prev[1])
    _RESULTS[number] = (title, passed, detail or (prev[2] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, detail = _RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
