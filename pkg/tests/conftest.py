import json
from importlib import resources

import pytest

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def reference():
    with resources.files("ecpchart").joinpath("data/reference_tables.json").open(encoding="utf-8") as fh:
        return json.load(fh)["tables"]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def report():
    """``report(criterion, ok, detail)`` records and prints one acceptance line; criterion None is a note."""

    def _report(criterion, ok, detail):
        if criterion is None:
            line = f"note: {detail}"
        else:
            line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report
