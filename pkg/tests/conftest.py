"""
Shared fixtures: small grids, the mean kernel and the saturating nonlinearity.
"""

import math
import sys
from pathlib import Path

import pytest
from scipy.optimize import brentq

project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from config import reset_settings
from src.dynamics.evolution import ProcessConfig
from src.dynamics.nonlinearity import saturating
from src.dynamics.spatial import assemble_kernel, build_grid, uniform_kernel


def positive_fixed_point(amplitude: float = 2.0) -> float:
    """Positive root of c = amplitude * tanh(c)."""
    return brentq(lambda c: c - amplitude * math.tanh(c), 0.5, 2.0 * amplitude, xtol=1e-14)


@pytest.fixture
def grid():
    return build_grid(0.0, 1.0, 11)


@pytest.fixture
def small_grid():
    return build_grid(0.0, 1.0, 5)


@pytest.fixture
def mean_kernel(grid):
    return assemble_kernel(grid, uniform_kernel(grid.measure))


@pytest.fixture
def small_kernel(small_grid):
    return assemble_kernel(small_grid, uniform_kernel(small_grid.measure))


@pytest.fixture
def g():
    return saturating(2.0, 1.0)


@pytest.fixture
def cfg():
    return ProcessConfig(dt=1e-2)


@pytest.fixture
def c_star():
    return positive_fixed_point(2.0)


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Tests never inherit NONLOCAL_* variables from the shell."""
    for name in ("NONLOCAL_THREADS", "NONLOCAL_LOG_LEVEL", "NONLOCAL_LOG_FILE"):
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    yield
    reset_settings()
