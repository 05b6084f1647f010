import io

import numpy as np
import pytest

from toxel4d.errors import GridFormatError
from toxel4d.grid4 import (
    HEADER_SIZE,
    Grid4,
    GridDType,
    equally_spaced_indices,
    from_bytes,
    linear_index,
    read,
    stack3,
    to_bytes,
)


def test_get_constant_grids():
    assert Grid4.solid(2).get((1, 1, 1, 1)) == 1
    assert Grid4.zeros(3).get((0, 2, 1, 0)) == 0


def test_get_indicator_grid():
    data = np.zeros((4, 4, 4, 4), dtype=np.uint8)
    data[2, 0, 1, 3] = 1
    g = Grid4(data, GridDType.BINARY8)
    assert g.get((2, 0, 1, 3)) == 1
    assert g.get((3, 0, 1, 3)) == 0


def test_get_bounds_errors():
    g = Grid4.solid(2)
    with pytest.raises(IndexError):
        g.get((2, 0, 0, 0))
    with pytest.raises(IndexError):
        g.get((0, -1, 0, 0))


def test_linear_index_matches_independent_enumerator(rng):
    dims = (3, 4, 5, 2)
    data = (rng.random(dims) < 0.5).astype(np.uint8)
    g = Grid4(data, GridDType.BINARY8)
    flat = g.flat()
    # independent enumerator: walk coordinates in x-fastest order and count
    counter = 0
    for w in range(dims[3]):
        for z in range(dims[2]):
            for y in range(dims[1]):
                for x in range(dims[0]):
                    coord = (x, y, z, w)
                    assert linear_index(coord, dims) == counter
                    assert flat[counter] == g.get(coord)
                    counter += 1
    assert counter == g.size


def test_invariant_rejections():
    with pytest.raises(ValueError):
        Grid4(np.full((2, 2, 2, 2), 2, dtype=np.uint8), GridDType.BINARY8)
    with pytest.raises(ValueError):
        Grid4(np.full((2, 2, 2, 2), 1.5, dtype=np.float32), GridDType.FLOAT32)
    with pytest.raises(ValueError):
        Grid4(np.full((2, 2, 2, 2), np.nan, dtype=np.float32), GridDType.FLOAT32)
    with pytest.raises(TypeError):
        Grid4(np.ones((2, 2, 2, 2), dtype=np.float64), GridDType.FLOAT32)


def test_invert_all_ones():
    assert Grid4.solid(2).invert() == Grid4.zeros(2)


def test_invert_is_involution(rng):
    g = Grid4((rng.random((4, 3, 2, 5)) < 0.5).astype(np.uint8), GridDType.BINARY8)
    assert g.invert().invert() == g


def test_invert_rejects_float():
    g = Grid4(np.zeros((2, 2, 2, 2), dtype=np.float32), GridDType.FLOAT32)
    with pytest.raises(TypeError):
        g.invert()


def test_invert_counts_carved_toxels(rng):
    from toxel4d.generator import Cavity, carve
    from toxel4d.rotation import Rot4
    from toxel4d.shapes import ShapeKind, make_shape

    cavity = Cavity(make_shape(ShapeKind.BALL4, 4.0), np.full(4, 11.5), Rot4.identity())
    carved, count = carve(Grid4.solid(24), cavity)
    assert count > 0
    mask = carved.invert()
    assert int(mask.data.sum()) == count


def test_slice3_w0_hyperplane(rng):
    data = (rng.random((8, 8, 8, 8)) < 0.4).astype(np.uint8)
    g = Grid4(data, GridDType.BINARY8)
    got = g.slice3(3, 0)
    assert got.shape == (8, 8, 8)
    assert np.array_equal(got, data[:, :, :, 0])
    assert got.size == 8**3


def test_slice_restack_identity(rng):
    data = (rng.random((3, 4, 5, 6)) < 0.5).astype(np.uint8)
    g = Grid4(data, GridDType.BINARY8)
    for axis in range(4):
        slices = [g.slice3(axis, i) for i in range(g.dims[axis])]
        assert stack3(slices, axis) == g


def test_slice3_errors():
    g = Grid4.solid(2)
    with pytest.raises(IndexError):
        g.slice3(4, 0)
    with pytest.raises(IndexError):
        g.slice3(0, 2)


def test_equally_spaced_slice_indices():
    # 18 slices of a 128-extent axis: round(k * 127 / 17)
    expected = [int(k * 127 / 17 + 0.5) for k in range(18)]
    got = equally_spaced_indices(128, 18)
    assert got == expected
    assert got[0] == 0 and got[-1] == 127
    assert len(set(got)) == 18
    assert equally_spaced_indices(5, 1) == [0]
    assert equally_spaced_indices(5, 5) == [0, 1, 2, 3, 4]


def test_write_read_binary_header_and_roundtrip():
    g = Grid4.solid(2)
    blob = to_bytes(g)
    assert len(blob) == HEADER_SIZE + 16
    assert HEADER_SIZE == 25
    assert blob[:4] == b"TOX4"
    assert from_bytes(blob) == g


def test_write_read_float_roundtrip(rng):
    data = rng.random((16, 16, 16, 16)).astype(np.float32)
    g = Grid4(data, GridDType.FLOAT32)
    back = from_bytes(to_bytes(g))
    assert back.dtype is GridDType.FLOAT32
    assert back.data.tobytes() == g.data.tobytes()


def test_roundtrip_non_cubic(rng):
    data = (rng.random((5, 2, 7, 3)) < 0.5).astype(np.uint8)
    g = Grid4(data, GridDType.BINARY8)
    assert from_bytes(to_bytes(g)) == g


def test_read_rejects_bad_magic():
    blob = bytearray(to_bytes(Grid4.solid(2)))
    blob[:4] = b"TOX5"
    with pytest.raises(GridFormatError, match="magic"):
        from_bytes(bytes(blob))


def test_read_rejects_bad_version_and_dtype():
    blob = bytearray(to_bytes(Grid4.solid(2)))
    blob[4] = 9
    with pytest.raises(GridFormatError, match="version"):
        from_bytes(bytes(blob))
    blob = bytearray(to_bytes(Grid4.solid(2)))
    blob[24] = 7
    with pytest.raises(GridFormatError, match="dtype"):
        from_bytes(bytes(blob))


def test_read_rejects_truncation_and_trailing():
    blob = to_bytes(Grid4.solid(2))
    with pytest.raises(GridFormatError, match="truncated"):
        from_bytes(blob[:-1])
    with pytest.raises(GridFormatError, match="trailing"):
        from_bytes(blob + b"\x00")
    with pytest.raises(GridFormatError, match="header"):
        from_bytes(blob[:10])


def test_read_rejects_invalid_payload_values():
    blob = bytearray(to_bytes(Grid4.solid(2)))
    blob[HEADER_SIZE] = 3  # not a 0/1 value
    with pytest.raises(GridFormatError, match="invariants"):
        from_bytes(bytes(blob))


def test_file_roundtrip(tmp_path, rng):
    g = Grid4((rng.random((4, 4, 4, 4)) < 0.5).astype(np.uint8), GridDType.BINARY8)
    path = tmp_path / "g.tox4"
    g.write(path)
    assert read(path) == g
    buf = io.BytesIO()
    g.write(buf)
    buf.seek(0)
    assert read(buf) == g
