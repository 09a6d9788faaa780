import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from emdscalp.montage import default_layout


@pytest.fixture(scope="session")
def layout():
    return default_layout()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
