import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cvbreed.qgrid import make_grid


@pytest.fixture(scope="session")
def grid():
    """The default engine grid."""
    return make_grid(12.0, 1024)


@pytest.fixture(scope="session")
def small_grid():
    """Coarser grid for the heavier mixed-state scans."""
    return make_grid(10.0, 512)


@pytest.fixture(scope="session")
def wide_grid():
    """Wide grid for flat-envelope comb states."""
    return make_grid(120.0, 16384)
