import math
import time

import pytest

from hdsbisim.bisim import compute_bisimulation, eta_sweep
from hdsbisim.model import load_thermostat

ETA0 = 0.05 * math.sqrt(2)

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def thermostat():
    return load_thermostat()


@pytest.fixture(scope="session")
def thermostat_result(thermostat):
    return compute_bisimulation(thermostat, ETA0, extra_rounds=3)


@pytest.fixture(scope="session")
def thermostat_sweep(thermostat):
    t0 = time.perf_counter()
    report = eta_sweep(thermostat, ETA0, 0.5, 3)
    report.elapsed = time.perf_counter() - t0
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
