"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import pytest

_OUTCOMES = {}


@pytest.fixture
def report(request):
    """Attach measured figures to the current criterion's summary line."""
    def add(text):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        details = [v for k, v in item.user_properties if k == "detail"]
        _OUTCOMES[number] = (title, rep.outcome, details)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, outcome, details = _OUTCOMES[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"AC{number} {status}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        tr.write_line(line)
