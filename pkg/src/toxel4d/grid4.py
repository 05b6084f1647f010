"""Dense 4D grids ("toxel" images) with bit-exact file I/O.

A grid is a dense block of scalars indexed by integer coordinates
(x, y, z, w).  The flat buffer order is canonical and x-fastest:

    linear_index(x, y, z, w) = ((w * dz + z) * dy + y) * dx + x

Two element types exist: ``Binary8`` (one byte per toxel, values 0/1) and
``Float32`` (little-endian IEEE 754 singles in [0, 1]).  Grids are treated
as immutable after construction; every public operation returns a fresh
grid.
"""

from __future__ import annotations

import io
import os
import struct
from enum import IntEnum

import numpy as np

from .errors import GridFormatError

MAGIC = b"TOX4"
VERSION = 1

_HEADER = struct.Struct("<4sI4IB")  # magic, version, dims (x,y,z,w), dtype code
HEADER_SIZE = _HEADER.size  # 25 bytes


class GridDType(IntEnum):
    BINARY8 = 0
    FLOAT32 = 1

    @property
    def numpy_dtype(self):
        return np.uint8 if self is GridDType.BINARY8 else np.float32

    @property
    def itemsize(self) -> int:
        return 1 if self is GridDType.BINARY8 else 4


def linear_index(coord, dims) -> int:
    """Canonical flat-buffer index of (x, y, z, w); x varies fastest."""
    x, y, z, w = coord
    dx, dy, dz, dw = dims
    return ((w * dz + z) * dy + y) * dx + x


class Grid4:
    """A dense 4D scalar field of shape (dx, dy, dz, dw)."""

    __slots__ = ("data", "dtype")

    def __init__(self, data: np.ndarray, dtype: GridDType):
        if data.ndim != 4:
            raise ValueError(f"expected a 4D array, got ndim={data.ndim}")
        if any(d < 1 for d in data.shape):
            raise ValueError(f"all extents must be >= 1, got {data.shape}")
        dtype = GridDType(dtype)
        if data.dtype != dtype.numpy_dtype:
            raise TypeError(f"buffer dtype {data.dtype} does not match {dtype.name}")
        if dtype is GridDType.BINARY8:
            if not np.isin(data, (0, 1)).all():
                raise ValueError("Binary8 grids may only contain 0 and 1")
        else:
            # NaNs fail both comparisons and are rejected here too.
            if not ((data >= 0.0) & (data <= 1.0)).all():
                raise ValueError("Float32 grids must lie in [0, 1]")
        self.data = data
        self.data.setflags(write=False)
        self.dtype = dtype

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Grid4":
        """Wrap an array, inferring Binary8 for integer input, Float32 otherwise."""
        array = np.asarray(array)
        if np.issubdtype(array.dtype, np.integer) or array.dtype == np.bool_:
            return cls(np.ascontiguousarray(array, dtype=np.uint8), GridDType.BINARY8)
        return cls(np.ascontiguousarray(array, dtype=np.float32), GridDType.FLOAT32)

    @classmethod
    def solid(cls, size: int | tuple) -> "Grid4":
        """All-ones binary grid; ``size`` is an edge length or a dims tuple."""
        dims = (size,) * 4 if np.isscalar(size) else tuple(size)
        return cls(np.ones(dims, dtype=np.uint8), GridDType.BINARY8)

    @classmethod
    def zeros(cls, size: int | tuple, dtype: GridDType = GridDType.BINARY8) -> "Grid4":
        dims = (size,) * 4 if np.isscalar(size) else tuple(size)
        dtype = GridDType(dtype)
        return cls(np.zeros(dims, dtype=dtype.numpy_dtype), dtype)

    # -- basic access ------------------------------------------------------

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def get(self, coord):
        """Value at integer coordinate (x, y, z, w); raises IndexError out of bounds."""
        coord = tuple(int(c) for c in coord)
        if len(coord) != 4:
            raise IndexError(f"expected 4 coordinates, got {len(coord)}")
        for c, d in zip(coord, self.dims):
            if not 0 <= c < d:
                raise IndexError(f"coordinate {coord} outside dims {self.dims}")
        return self.data[coord]

    def __getitem__(self, coord):
        return self.get(coord)

    def flat(self) -> np.ndarray:
        """The buffer in canonical (x-fastest) order."""
        return self.data.reshape(-1, order="F")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid4):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.dims == other.dims
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"Grid4(dims={self.dims}, dtype={self.dtype.name})"

    # -- operations --------------------------------------------------------

    def invert(self) -> "Grid4":
        """0 <-> 1 on binary grids; the cavity mask of a carved sample."""
        if self.dtype is not GridDType.BINARY8:
            raise TypeError("invert is only defined for Binary8 grids")
        return Grid4(np.asarray(1 - self.data, dtype=np.uint8), GridDType.BINARY8)

    def slice3(self, axis: int, index: int) -> np.ndarray:
        """The 3D sub-grid at a fixed coordinate along ``axis`` (0..3)."""
        if not 0 <= axis <= 3:
            raise IndexError(f"axis must be 0..3, got {axis}")
        if not 0 <= index < self.dims[axis]:
            raise IndexError(f"index {index} outside axis extent {self.dims[axis]}")
        return np.take(self.data, index, axis=axis)

    # -- file format -------------------------------------------------------

    def write(self, sink) -> None:
        """Serialize as a .tox4 stream: 25-byte header + raw canonical payload."""
        header = _HEADER.pack(MAGIC, VERSION, *self.dims, int(self.dtype))
        payload = self.data.astype(self.data.dtype.newbyteorder("<")).tobytes(order="F")
        if hasattr(sink, "write"):
            sink.write(header)
            sink.write(payload)
        else:
            with open(sink, "wb") as fh:
                fh.write(header)
                fh.write(payload)


def read(source) -> Grid4:
    """Parse a .tox4 stream back into a Grid4 (bit-exact round trip)."""
    if hasattr(source, "read"):
        return _read_stream(source)
    with open(source, "rb") as fh:
        return _read_stream(fh)


def _read_stream(fh) -> Grid4:
    header = fh.read(HEADER_SIZE)
    if len(header) < HEADER_SIZE:
        raise GridFormatError(f"truncated header: {len(header)} < {HEADER_SIZE} bytes")
    magic, version, dx, dy, dz, dw, code = _HEADER.unpack(header)
    if magic != MAGIC:
        raise GridFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise GridFormatError(f"unknown version {version}")
    try:
        dtype = GridDType(code)
    except ValueError:
        raise GridFormatError(f"unknown dtype code {code}") from None
    dims = (dx, dy, dz, dw)
    if any(d < 1 for d in dims):
        raise GridFormatError(f"dims must all be >= 1, got {dims}")
    count = dx * dy * dz * dw
    expected = count * dtype.itemsize
    payload = fh.read(expected + 1)
    if len(payload) < expected:
        raise GridFormatError(f"truncated payload: {len(payload)} < {expected} bytes")
    if len(payload) > expected:
        raise GridFormatError("trailing bytes after payload")
    if dtype is GridDType.BINARY8:
        flat = np.frombuffer(payload, dtype=np.uint8).copy()
    else:
        flat = np.frombuffer(payload, dtype="<f4").astype(np.float32, copy=True)
    data = flat.reshape(dims, order="F")
    try:
        return Grid4(data, dtype)
    except (ValueError, TypeError) as exc:
        raise GridFormatError(f"payload violates {dtype.name} invariants: {exc}") from None


def write(grid: Grid4, sink) -> None:
    grid.write(sink)


def to_bytes(grid: Grid4) -> bytes:
    buf = io.BytesIO()
    grid.write(buf)
    return buf.getvalue()


def from_bytes(blob: bytes) -> Grid4:
    return read(io.BytesIO(blob))


def stack3(slices, axis: int) -> Grid4:
    """Rebuild a grid from its full run of 3D slices along ``axis``."""
    data = np.stack(slices, axis=axis)
    return Grid4.from_array(data)


def equally_spaced_indices(extent: int, count: int) -> list[int]:
    """``count`` indices spanning 0..extent-1 inclusive: round(k*(extent-1)/(count-1))."""
    if count < 1 or extent < 1:
        raise ValueError("extent and count must be positive")
    if count == 1:
        return [0]
    # round half up so the rule is deterministic across platforms
    return [int((k * (extent - 1)) / (count - 1) + 0.5) for k in range(count)]
