import os
import sys

import numpy as np
import pytest

from tumatch.core import FiniteMarket, TypeSpace
from tumatch.montecarlo import run_grid, table1_grid


def random_market(rng, I, J, X=2, Y=2, scale=1.0):
    """Market with arbitrary continuous payoffs, for solver checks."""
    return FiniteMarket(
        rng.integers(0, X, I),
        rng.integers(0, Y, J),
        rng.normal(0.0, scale, (I, J)),
        rng.normal(0.0, scale, I),
        rng.normal(0.0, scale, J),
        TypeSpace(X, Y),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def n_workers():
    return min(4, os.cpu_count() or 1)


@pytest.fixture(scope="session")
def table1_seed42():
    """The 24-scenario grid at desk scale (population 200, 100 draws, seed 42), keyed by scenario id."""
    return {summary.scenario_id: (config, draws, summary)
            for config, draws, summary in run_grid(table1_grid(200, 100, 42), n_workers())}


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
