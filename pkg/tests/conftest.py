import math
import os

import numpy as np
import pytest

from wavecip.control import HUMConfig, HUMProblem, solve_control
from wavecip.domain import (BoundaryPartition, CoefficientField, FrequencySample, Subdomain, build_grid,
                            make_bump_c1, make_cutoff_beta)

# acceptance lines collected by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: (len(s.split()[1]), s)):
        terminalreporter.write_line(line)


class Setup:
    """Default geometry: unit square, Γ = right + top, bump in the centred square Ω′."""

    def __init__(self, n=64, T=4.0, alpha=0.02, amplitude=1.0, sides=("right", "top")):
        self.grid = build_grid(1.0, 1.0, n, n, T)
        self.gamma = BoundaryPartition(self.grid, sides)
        self.om = Subdomain.rectangle(0.25, 0.75, 0.25, 0.75)
        self.c0 = np.ones(self.grid.shape)
        self.c1 = make_bump_c1(self.grid, (0.5, 0.5), 0.2, amplitude, self.om)
        self.coeff = CoefficientField(self.grid, self.c0, self.c1, alpha, self.om)
        self.beta = make_cutoff_beta(self.grid, self.om, 0.15)
        self._probs = {}
        self._controls = {}

    def problem(self, cfg):
        if cfg not in self._probs:
            self._probs[cfg] = HUMProblem(self.grid, self.gamma, self.c0, cfg)
        return self._probs[cfg]

    def control(self, eta, tol=1e-3, max_iters=200, epsilon=1e-6):
        key = (tuple(eta), tol, max_iters, epsilon)
        if key not in self._controls:
            cfg = HUMConfig(cg_tol=tol, cg_max_iters=max_iters, epsilon=epsilon)
            self._controls[key] = solve_control(FrequencySample(tuple(eta)), self.beta, self.problem(cfg), cfg)
        return self._controls[key]


@pytest.fixture(scope="session")
def setup64():
    return Setup(64)


@pytest.fixture(scope="session")
def setup32():
    return Setup(32)


@pytest.fixture(scope="session")
def eta_2pi():
    return FrequencySample((2 * math.pi, 0.0))


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    d = os.environ.get("WAVECIP_TEST_ARTIFACTS")
    if d:
        os.makedirs(d, exist_ok=True)
        from pathlib import Path

        return Path(d)
    return tmp_path_factory.mktemp("artifacts")
