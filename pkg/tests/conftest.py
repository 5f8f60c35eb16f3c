import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    results = request.config.stash.setdefault(_RESULTS, [])

    def record(criterion: str, passed: bool, detail: str = ""):
        results.append((criterion, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(results):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}")
