import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    notes = [f"{k}={v}" for k, v in item.user_properties]
    _RESULTS[number] = (outcome.get_result().passed, title, call.duration, notes)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        passed, title, duration, notes = _RESULTS[number]
        extra = f" [{'; '.join(notes)}]" if notes else ""
        terminalreporter.write_line(
            f"#{number} {'PASS' if passed else 'FAIL'} {title} ({duration:.1f}s){extra}")
