import pytest

from lawson_dpw import solver as so
from lawson_dpw import surface as su


@pytest.fixture(scope="session")
def solved_002():
    """Closed potential at t = 0.02 (genus 24) from the first-order seed."""
    return so.solve_at_t(0.02, None, so.ClosingConfig(N=6))


@pytest.fixture(scope="session")
def spectral_002(solved_002):
    return su.spectral_data(solved_002.coeffs, K=32)


@pytest.fixture(scope="session")
def continuation_005():
    """Continuation 0.01 -> 0.05 with truncation growing from 6 to at most 14."""
    return so.continue_in_t(0.01, 0.05, so.ClosingConfig(N=6, N_max=14))


@pytest.fixture(scope="session")
def spectral_005(continuation_005):
    return su.spectral_data(continuation_005[-1].coeffs, K=32)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line for an acceptance criterion; the lines are echoed in the summary."""
    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
