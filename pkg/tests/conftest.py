"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from localvar.adaptive import IntervalGrid
from localvar.calibrate import CalibrationBank
from localvar.scenarios import THETA_1, THETA_2
from localvar.var import VarParams

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def epu_like_frame(seed: int = 0, n: int = 217, start: str = "2003-01") -> pd.DataFrame:
    """Five persistent series with a common factor and three volatile episodes."""
    rng = np.random.default_rng(seed)
    d = 5
    phi = np.full((d, d), 0.03) + np.diag([0.72, 0.75, 0.70, 0.68, 0.74])
    mu = np.array([110.0, 120.0, 150.0, 130.0, 140.0])
    c = (np.eye(d) - phi) @ mu
    load = np.array([1.0, 0.8, 0.9, 0.7, 0.85])
    episodes = [(68, 84, 2.5), (100, 118, 2.0), (205, 217, 3.0)]
    y = np.zeros((n, d))
    y[0] = mu
    for t in range(1, n):
        scale = next((f for a, b, f in episodes if a <= t < b), 1.0)
        y[t] = c + phi @ y[t - 1] + rng.normal() * 12 * scale * load + rng.normal(0, 10, d)
    frame = pd.DataFrame(y, columns=["US", "DE", "UK", "FR", "IT"])
    frame.insert(0, "date", pd.period_range(start, periods=n, freq="M").astype(str))
    return frame


@pytest.fixture
def theta1() -> VarParams:
    return THETA_1


@pytest.fixture
def theta2() -> VarParams:
    return THETA_2


@pytest.fixture(scope="session")
def grid() -> IntervalGrid:
    return IntervalGrid.default()


@pytest.fixture(scope="session")
def small_bank() -> CalibrationBank:
    """1000-sample bank under theta_1, shared by quick tests."""
    return CalibrationBank.simulate(THETA_1, IntervalGrid.default(), 1000, seed=11)


@pytest.fixture
def epu_csv(tmp_path):
    path = tmp_path / "epu.csv"
    epu_like_frame(0).to_csv(path, index=False)
    return path
