import numpy as np
import pytest

from efi.schemas.experiment import ExperimentConfig, parse_config

from tests.helpers import tiny_linear_dict


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return parse_config(tiny_linear_dict())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
