import warnings

import pytest
from hypothesis import HealthCheck, settings

from fluxcoh.qubit import FluxoniumParams

settings.register_profile(
    "fluxcoh",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("fluxcoh")


@pytest.fixture
def qubit_g():
    return FluxoniumParams(1.212, 5.315, 0.547, "G")


@pytest.fixture
def qubit_a():
    return FluxoniumParams(1.369, 2.758, 0.585, "A")


def quiet_params(e_c, e_j, e_l, label=""):
    """FluxoniumParams without the E_J/E_C range warning (for property tests)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return FluxoniumParams(e_c, e_j, e_l, label)


# verdict lines from tests/test_acceptance.py, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").rstrip("ab"))):
            terminalreporter.write_line(line)
