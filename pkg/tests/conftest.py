from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from skybench.network import default_calibration
from skybench.scenarios import builtin_scenarios
from skybench.tools import default_registry


@pytest.fixture(scope="session")
def calibration():
    return default_calibration()


@pytest.fixture(scope="session")
def scenarios():
    return builtin_scenarios()


@pytest.fixture(scope="session")
def scenario_by_id(scenarios):
    return {s.scenario_id: s for s in scenarios}


@pytest.fixture(scope="session")
def registry():
    return default_registry()
