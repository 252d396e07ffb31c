import pytest

from pairqfi import QuadratureSpec, ZernikeBasis, build_clear_circular_pupil

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def pupil():
    return build_clear_circular_pupil()


@pytest.fixture(scope="session")
def coarse_pupil():
    return build_clear_circular_pupil(QuadratureSpec(40, 80))


@pytest.fixture(scope="session")
def basis():
    return ZernikeBasis(4)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
