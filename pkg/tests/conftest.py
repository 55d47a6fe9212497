"""Shared fixtures: the acceptance reporter printing one line per criterion."""

import pytest

_results = []


@pytest.fixture
def criterion():
    """Collect a pass/fail line for the acceptance summary."""

    def record(number, name, passed, detail=""):
        line = (f"ACCEPTANCE {number:>2} {name:<28} "
                f"{'PASS' if passed else 'FAIL'}  {detail}")
        _results.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(_results)):
            terminalreporter.write_line(line)
