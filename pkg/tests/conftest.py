import os
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
sys.path.insert(0, str(SRC))

from mlrd_toolkit.core.model import ProcessSpec  # noqa: E402

CONFIGS = ROOT / "configs"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale Monte Carlo acceptance runs (MLRD_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.getenv("MLRD_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set MLRD_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture
def linear_spec() -> ProcessSpec:
    return ProcessSpec.linear([0.4, 0.2], np.eye(2), np.eye(2))


@pytest.fixture
def gaussian_spec() -> ProcessSpec:
    return ProcessSpec.gaussian_diagonal([0.3, 0.2], [0.5, 0.5])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240101)


@pytest.fixture
def random_spd(rng):
    """Seeded well-conditioned SPD matrices drawn from the shared rng."""

    def make(d: int, jitter: float = 0.5) -> np.ndarray:
        a = rng.standard_normal((d, d))
        return a @ a.T + jitter * np.eye(d)

    return make
