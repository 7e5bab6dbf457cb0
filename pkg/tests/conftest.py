import pytest

from adaptexp.model import ArmModel

_ACCEPTANCE_LINES = []


@pytest.fixture
def bern():
    return ArmModel.bernoulli(0.1)


@pytest.fixture
def gauss():
    return ArmModel.gaussian(0.0)


@pytest.fixture
def report():
    """``report(k, ok, detail)`` records and prints one PASS/FAIL line for criterion ``k``."""

    def _report(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
