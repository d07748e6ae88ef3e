import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.fixture
def criterion(request):
    """Record a criterion outcome; returns ``passed`` so tests can assert on it."""

    def report(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), request.node.name, detail)
        return bool(passed)

    return report


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number = marker.args[0]
    if rep.failed and (number not in _CRITERIA or _CRITERIA[number][0]):
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
        _CRITERIA[number] = (False, item.name, msg)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, name, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}")
