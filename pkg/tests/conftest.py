"""Shared fixtures; expensive runs are computed once per session."""

import numpy as np
import pytest

from mgsta.plants import RobotModel
from mgsta.simulator import Scenario, run
from mgsta.sta import StaParams

# closed-loop constants of the published robot scenario
ROBOT_STA = StaParams(alpha=1.0, beta=1.0, b=3.0, p=0.4, k1=42.0, k2=13.0)

# default robot sampling box in (q_err, s) coordinates: theta in [-pi/3, pi/3]
ROBOT_BOX = dict(
    lower=(-1.0, -1.0, -np.pi / 3 - np.pi / 4, -2.0, -2.0, -2.0),
    upper=(1.0, 1.0, np.pi / 3 - np.pi / 4, 2.0, 2.0, 2.0),
    counts=(3, 3, 7, 5, 5, 5),
)


@pytest.fixture(scope="session")
def robot_run():
    return run(Scenario(RobotModel(), ROBOT_STA, dt=1e-3, horizon=10.0))


@pytest.fixture(scope="session")
def robot_run_half_dt():
    return run(Scenario(RobotModel(), ROBOT_STA, dt=5e-4, horizon=10.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
