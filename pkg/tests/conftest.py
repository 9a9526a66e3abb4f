import pytest

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record a PASS/FAIL line for the calling criterion test."""
    notes = []
    yield notes
    call = getattr(request.node, "rep_call", None)
    ok = call is not None and call.passed
    label = request.node.name.removeprefix("test_")
    detail = "; ".join(notes)
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {label}" + (f" ({detail})" if detail else ""))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion_")[1].split("_")[0])):
            terminalreporter.write_line(line)
