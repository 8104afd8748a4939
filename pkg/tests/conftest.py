"""Print a one-line verdict per acceptance criterion at the end of the run."""

import pytest

_ACCEPTANCE = "test_acceptance.py"
_results: list[tuple[str, str]] = []
_notes: dict[str, list[str]] = {}


@pytest.fixture
def note(request):
    """Attach an informational message to the current test's verdict line."""
    return lambda msg: _notes.setdefault(request.node.nodeid, []).append(msg)


def pytest_runtest_logreport(report):
    if _ACCEPTANCE not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _results.append((verdict, report.nodeid))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for verdict, nodeid in _results:
        extra = "; ".join(_notes.get(nodeid, []))
        name = nodeid.split("::", 1)[1]
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  [{extra}]" if extra else ""))
