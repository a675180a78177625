import pytest

from eela.acoustics import DEFAULT_DIAGONAL_M, ChannelParams


@pytest.fixture(scope="session")
def chan():
    """Channel calibrated so 100 W just covers the default region diagonal."""
    return ChannelParams().calibrated(100.0, DEFAULT_DIAGONAL_M)


# one line per acceptance criterion, printed after the run
CRITERIA: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {detail}"
    print(CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
