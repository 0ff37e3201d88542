import pytest

from parastab import CoefficientField, Grid, build_basis


@pytest.fixture(scope="session")
def unit_coeffs():
    return CoefficientField.constant(1.0, -1.0)


@pytest.fixture(scope="session")
def basis400(unit_coeffs):
    return build_basis(unit_coeffs, Grid(400))


@pytest.fixture(scope="session")
def basis400_full(unit_coeffs):
    return build_basis(unit_coeffs, Grid(400), resolution_guard=False)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k][1])
