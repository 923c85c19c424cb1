import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quadloco.config import ExperimentConfig
from quadloco.kinematics import RobotModel
from quadloco.simulation import SimParams


@pytest.fixture(scope="session")
def model():
    return RobotModel()


@pytest.fixture(scope="session")
def sim_params():
    return SimParams()


@pytest.fixture()
def cfg():
    return ExperimentConfig()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
