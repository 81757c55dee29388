import numpy as np
import pytest

from pirqsim.lti import from_transfer_function, second_order_lag
from pirqsim.pirq import stabilizing_gains

G0 = 9.807
NOMINAL_ZEROS = (-10.0, -15 + 5j, -15 - 5j)


@pytest.fixture(scope="session")
def plant():
    return from_transfer_function([1.0], [0.0008, 0.045, 1.0])


@pytest.fixture(scope="session")
def sensor(plant):
    return second_order_lag(5.0 * float(np.max(np.abs(plant.poles()))), 0.7)


@pytest.fixture(scope="session")
def gains(plant, sensor):
    return stabilizing_gains(NOMINAL_ZEROS, 1.0, plant, sensor)


@pytest.fixture(scope="session")
def nominal_run():
    from pirqsim.config import default_config
    from pirqsim.sim import run_scenario

    config = default_config()
    return config, run_scenario(config)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``criterion(number, title, passed, detail)``; the line is printed
    immediately and repeated in the terminal summary.
    """

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
