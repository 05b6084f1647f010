import numpy as np
import pytest

from toxel4d.grid4 import Grid4, GridDType
from toxel4d import shapes as shp
from toxel4d.generator import Cavity, carve
from toxel4d.rotation import Rot4


def carve_centered(size: int, shape: shp.ShapeSpec, rot: Rot4 | None = None) -> Grid4:
    """Solid cube with one centered cavity; shared by homology/rotation tests."""
    cavity = Cavity(
        shape=shape,
        center=np.full(4, (size - 1) / 2.0),
        rot=rot or Rot4.identity(),
    )
    grid, _ = carve(Grid4.solid(size), cavity)
    return grid


def random_binary_grid(rng: np.random.Generator, dims, p: float = 0.5) -> Grid4:
    data = (rng.random(dims) < p).astype(np.uint8)
    return Grid4(data, GridDType.BINARY8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
