from pathlib import Path

import numpy as np
import pytest

from actisleep.series import LabeledSeries, SleepState

FIXTURES = Path(__file__).parent / "fixtures"

W, F, Z, S = (int(SleepState.WAKE), int(SleepState.FALLING_ASLEEP),
              int(SleepState.SIESTA), int(SleepState.SLEEP))


def make_series(states, activity=None, patient_id="P00", start_clock=0, attack=None):
    states = np.asarray(states)
    if activity is None:
        activity = np.where(states == W, 100.0, 1.0)
    return LabeledSeries(patient_id, activity, states, attack, start_clock)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -----------------------------------------------------

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
