import math

import numpy as np
import pytest

from conftest import carve_centered, random_binary_grid
from toxel4d.grid4 import Grid4, GridDType
from toxel4d.homology import betti_reduction
from toxel4d.rotation import (
    COORDINATE_PLANES,
    Rot4,
    apply,
    apply_inverse,
    random_rotation,
    rotate90,
)
from toxel4d.shapes import ShapeKind, make_shape


def test_rot4_validation():
    Rot4(np.eye(4))
    with pytest.raises(ValueError):
        Rot4(np.eye(4) * 2.0)  # not orthonormal
    refl = np.eye(4)
    refl[0, 0] = -1.0
    with pytest.raises(ValueError):
        Rot4(refl)  # determinant -1
    with pytest.raises(ValueError):
        Rot4(np.eye(3))


def test_random_rotation_group_membership(rng):
    for _ in range(50):
        rot = random_rotation(rng)
        m = rot.m
        assert np.abs(m.T @ m - np.eye(4)).max() < 1e-12
        assert abs(np.linalg.det(m) - 1.0) < 1e-12


def test_random_rotation_inverse_roundtrip(rng):
    rot = random_rotation(rng)
    pts = rng.standard_normal((1000, 4))
    back = apply(rot.inverse(), apply(rot, pts))
    assert np.abs(back - pts).max() < 1e-10
    assert np.abs(apply_inverse(rot, apply(rot, pts)) - pts).max() < 1e-10


def test_random_rotation_haar_mean(rng):
    # the image of e1 is uniform on S^3: each coordinate has mean 0 and
    # variance 1/4, so the empirical mean stays within 3 sigma of 0
    n = 100_000
    e1 = np.array([1.0, 0.0, 0.0, 0.0])
    total = np.zeros(4)
    for _ in range(n):
        total += apply(random_rotation(rng), e1)
    mean = total / n
    bound = 3 * 0.5 / math.sqrt(n)
    assert np.abs(mean).max() < bound


def test_apply_identity_and_plane_rotation():
    p = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(apply(Rot4.identity(), p), p)
    quarter = Rot4.plane_rotation(0, 1, math.pi / 2)
    assert np.abs(apply(quarter, [1.0, 0, 0, 0]) - [0, 1, 0, 0]).max() < 1e-15


def test_apply_preserves_norm(rng):
    for _ in range(20):
        rot = random_rotation(rng)
        p = rng.standard_normal(4) * 10
        assert abs(np.linalg.norm(apply(rot, p)) - np.linalg.norm(p)) < 1e-10


def test_rotate90_identity_and_order(rng):
    g = random_binary_grid(rng, (6, 6, 6, 6))
    for plane in range(6):
        assert rotate90(g, plane, 0) == g
        out = g
        for _ in range(4):
            out = rotate90(out, plane, 1)
        assert out == g
        for k in range(4):
            assert rotate90(rotate90(g, plane, k), plane, 4 - k) == g


def test_rotate90_is_toxel_permutation(rng):
    g = random_binary_grid(rng, (5, 5, 5, 5))
    total = int(g.data.sum())
    for plane in COORDINATE_PLANES:
        for k in range(4):
            assert int(rotate90(g, plane, k).data.sum()) == total


def test_rotate90_quarter_turn_maps_coordinates():
    data = np.zeros((4, 4, 4, 4), dtype=np.uint8)
    data[1, 0, 2, 3] = 1
    g = Grid4(data, GridDType.BINARY8)
    out = rotate90(g, (0, 1), 1)
    # one quarter turn in the xy-plane sends (x, y) to (n-1-y, x)
    assert out.get((3, 1, 2, 3)) == 1
    assert int(out.data.sum()) == 1


def test_rotate90_requires_square_plane():
    g = Grid4.solid((4, 4, 6, 4))
    with pytest.raises(ValueError):
        rotate90(g, (0, 2), 1)
    rotate90(g, (0, 1), 1)  # equal extents still fine
    with pytest.raises(IndexError):
        rotate90(g, 6, 1)


def test_rotate90_float_grid(rng):
    data = rng.random((4, 4, 4, 4)).astype(np.float32)
    g = Grid4(data, GridDType.FLOAT32)
    out = rotate90(g, (2, 3), 2)
    assert out.dtype is GridDType.FLOAT32
    assert rotate90(out, (2, 3), 2) == g


def test_rotate90_preserves_homology(rng):
    # quarter turns permute toxels, so Betti numbers cannot change
    kinds = [ShapeKind.BALL4, ShapeKind.TORUS_S1B3, ShapeKind.TORUS_S2B2, ShapeKind.TORUS_T2B2]
    for trial in range(8):
        kind = kinds[trial % 4]
        g = carve_centered(20, make_shape(kind, 2.4, alpha=0.5), rot=random_rotation(rng))
        before = betti_reduction(g)
        plane = int(rng.integers(0, 6))
        turns = int(rng.integers(1, 4))
        assert betti_reduction(rotate90(g, plane, turns)) == before
