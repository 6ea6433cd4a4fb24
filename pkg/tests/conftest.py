from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "einsel" / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scenario_dir():
    return SCENARIOS
