"""4D rotations: Haar-uniform SO(4) sampling and exact 90-degree grid turns.

Continuous rotations orient cavities before carving.  Quarter-turn grid
rotations are pure toxel permutations (no interpolation), used as
label-preserving training augmentation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .grid4 import Grid4

#: The six coordinate planes a grid can be rotated in, as axis pairs.
COORDINATE_PLANES = tuple(itertools.combinations(range(4), 2))

_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class Rot4:
    """A proper rotation of R^4 (orthogonal, determinant +1)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"rotation matrix must be 4x4, got {m.shape}")
        if np.abs(m.T @ m - np.eye(4)).max() > _ORTHO_TOL:
            raise ValueError("matrix is not orthonormal to 1e-12")
        if abs(np.linalg.det(m) - 1.0) > _ORTHO_TOL:
            raise ValueError("matrix determinant is not +1 to 1e-12")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Rot4":
        return cls(np.eye(4))

    @classmethod
    def plane_rotation(cls, i: int, j: int, angle: float) -> "Rot4":
        """Rotation by ``angle`` in the (i, j) coordinate plane."""
        m = np.eye(4)
        c, s = math.cos(angle), math.sin(angle)
        m[i, i] = c
        m[j, j] = c
        m[j, i] = s
        m[i, j] = -s
        return cls(m)

    def inverse(self) -> "Rot4":
        return Rot4(self.m.T.copy())


def random_rotation(rng: np.random.Generator) -> Rot4:
    """A Haar-uniform element of SO(4).

    QR-orthonormalization of an iid standard-normal matrix, with the R-diagonal
    sign fix, is Haar on O(4); right-multiplying the det=-1 half by a fixed
    reflection folds it onto SO(4) without biasing the measure.
    """
    q, r = np.linalg.qr(rng.standard_normal((4, 4)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return Rot4(q)


def apply(rot: Rot4, points) -> np.ndarray:
    """Rotate a 4-vector or an (..., 4) block of points."""
    p = np.asarray(points, dtype=np.float64)
    return p @ rot.m.T


def apply_inverse(rot: Rot4, points) -> np.ndarray:
    """Rotate by the inverse (transpose); maps world frame into the shape frame."""
    p = np.asarray(points, dtype=np.float64)
    return p @ rot.m


def rotate90_data(data: np.ndarray, plane, quarter_turns: int) -> np.ndarray:
    """Quarter-turn permutation of a bare 4D array; see rotate90."""
    if isinstance(plane, (int, np.integer)):
        if not 0 <= plane < len(COORDINATE_PLANES):
            raise IndexError(f"plane index must be 0..5, got {plane}")
        plane = COORDINATE_PLANES[plane]
    i, j = plane
    if i == j or not (0 <= i <= 3 and 0 <= j <= 3):
        raise ValueError(f"plane must be two distinct axes in 0..3, got {plane}")
    if data.shape[i] != data.shape[j]:
        raise ValueError(
            f"rotation plane extents must match, got {data.shape[i]} != {data.shape[j]}"
        )
    k = int(quarter_turns) % 4
    if k == 0:
        return data.copy()
    return np.rot90(data, k=k, axes=(i, j)).copy()


def rotate90(grid: Grid4, plane, quarter_turns: int) -> Grid4:
    """Exact quarter-turn rotation of a grid in one coordinate plane.

    ``plane`` is an axis pair (i, j) or an index into COORDINATE_PLANES.
    The two extents in the plane must be equal so the permutation preserves
    the grid's dims.  No interpolation: the output is a toxel permutation.
    """
    return Grid4(rotate90_data(grid.data, plane, quarter_turns), grid.dtype)
