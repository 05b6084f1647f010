"""toxel4d: labeled synthetic 4D voxel datasets, exact cubical homology,
downscaling pipelines, and a small trainable 4D CNN."""

from .betti import BettiVector, euler
from .grid4 import Grid4, GridDType, read, write
from .shapes import RadiusRanges, ShapeKind, ShapeSpec, make_shape
from .rotation import Rot4, random_rotation, rotate90

__version__ = "0.1.0"

__all__ = [
    "BettiVector",
    "euler",
    "Grid4",
    "GridDType",
    "read",
    "write",
    "RadiusRanges",
    "ShapeKind",
    "ShapeSpec",
    "make_shape",
    "Rot4",
    "random_rotation",
    "rotate90",
    "__version__",
]
