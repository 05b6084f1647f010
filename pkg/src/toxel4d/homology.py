"""Exact Betti numbers of binary 4D grids via the unfiltered cubical complex.

The complex is the union of the closed unit 4-cubes of all foreground
toxels, together with every face: a k-cell exists iff it is a face of some
foreground toxel's 4-cube.  Cells live on the "doubled" lattice: a cell is
a tuple of four interval coordinates c_i in 0..2*d_i, spanning axis i iff
c_i is odd; its dimension is the number of odd coordinates.

``betti_reduction`` computes, over the two-element field,

    beta_k = n_k - rank d_k - rank d_{k+1}

by sequential column reduction of the boundary matrices in decreasing
dimension, with the standard clearing optimization (a column whose cell was
a pivot row one dimension up reduces to zero and is skipped).  Columns are
processed in a deterministic order: anchor vertex in canonical raster
order, then spanned-axis set by ascending bitmask.  Boundary columns are
generated on demand from the doubled-lattice bitmap, never materialized as
a global matrix.

Two independent oracles cross-check the reduction: ``beta0_unionfind``
(foreground components, vertex connectivity) and ``beta3_duality``
(enclosed background pockets, face connectivity), exact for grids whose
outermost toxel layer is foreground.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .betti import BettiVector
from .errors import CellBudgetError
from .grid4 import Grid4, GridDType

#: Refuse to reduce complexes above this many cells (a 64^4 grid is ~2.8e8).
DEFAULT_CELL_BUDGET = 320_000_000


# ---------------------------------------------------------------------------
# complex construction


def _doubled_bitmap(data: np.ndarray) -> np.ndarray:
    """uint8 presence bitmap on the doubled lattice (shape 2*d+1 per axis)."""
    shape = tuple(2 * d + 1 for d in data.shape)
    doubled = np.zeros(shape, dtype=np.uint8)
    doubled[1::2, 1::2, 1::2, 1::2] = data
    # dilation by the 3^4-ones kernel, separably: marks every face of a 4-cube
    for axis in range(4):
        prev = doubled.copy()
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        np.maximum(doubled[tuple(lo)], prev[tuple(hi)], out=doubled[tuple(lo)])
        np.maximum(doubled[tuple(hi)], prev[tuple(lo)], out=doubled[tuple(hi)])
    return doubled


def _class_slices(mask: int):
    return tuple(slice(1, None, 2) if mask >> i & 1 else slice(0, None, 2) for i in range(4))


@dataclass
class CubicalComplex:
    """Cell inventory of a binary grid's cubical complex."""

    dims: tuple
    doubled: np.ndarray = field(repr=False)
    cell_counts: tuple = ()

    @property
    def total_cells(self) -> int:
        return int(sum(self.cell_counts))

    @property
    def euler_characteristic(self) -> int:
        n0, n1, n2, n3, n4 = self.cell_counts
        return n0 - n1 + n2 - n3 + n4

    # Enumeration helpers; python-speed, intended for small grids and oracles.

    def has_cell(self, anchor, axes) -> bool:
        c = tuple(2 * a + (1 if i in axes else 0) for i, a in enumerate(anchor))
        if any(not 0 <= ci < e for ci, e in zip(c, self.doubled.shape)):
            return False
        return bool(self.doubled[c])

    def cells(self, k: int):
        """Present k-cells as (anchor, axes) in deterministic order:
        anchor raster (canonical linear index), then axis set by bitmask."""
        masks = [m for m in range(16) if bin(m).count("1") == k]
        dx, dy, dz, dw = self.dims
        for vw in range(dw + 1):
            for vz in range(dz + 1):
                for vy in range(dy + 1):
                    for vx in range(dx + 1):
                        anchor = (vx, vy, vz, vw)
                        for m in masks:
                            axes = tuple(i for i in range(4) if m >> i & 1)
                            if any(anchor[i] >= self.dims[i] for i in axes):
                                continue
                            if self.has_cell(anchor, axes):
                                yield anchor, axes

    @staticmethod
    def faces(anchor, axes):
        """The 2k faces of a k-cell, (anchor, axes) pairs."""
        out = []
        for i in axes:
            rest = tuple(j for j in axes if j != i)
            out.append((tuple(anchor), rest))
            plus = tuple(a + 1 if j == i else a for j, a in enumerate(anchor))
            out.append((plus, rest))
        return out


def build_complex(grid: Grid4) -> CubicalComplex:
    """All faces of foreground toxel 4-cubes, with exact per-dimension counts."""
    if grid.dtype is not GridDType.BINARY8:
        raise TypeError("the cubical complex is defined for Binary8 grids")
    doubled = _doubled_bitmap(grid.data)
    counts = [0] * 5
    for mask in range(16):
        k = bin(mask).count("1")
        counts[k] += int(doubled[_class_slices(mask)].sum(dtype=np.int64))
    return CubicalComplex(dims=grid.dims, doubled=doubled, cell_counts=tuple(counts))


# ---------------------------------------------------------------------------
# addressing tables for the reduction kernel
#
# Cells of one parity class form a lattice with extent d_i (spanned axis) or
# d_i + 1 (unspanned).  Within a fixed dimension k the classes are packed in
# ascending-bitmask order, giving every k-cell a compact integer address.


def _class_tables(dims):
    ext = np.zeros((16, 4), dtype=np.int64)
    strides = np.zeros((16, 4), dtype=np.int64)
    sizes = np.zeros(16, dtype=np.int64)
    for mask in range(16):
        for i in range(4):
            ext[mask, i] = dims[i] if mask >> i & 1 else dims[i] + 1
        strides[mask, 0] = 1
        for i in range(1, 4):
            strides[mask, i] = strides[mask, i - 1] * ext[mask, i - 1]
        sizes[mask] = strides[mask, 3] * ext[mask, 3]
    base = np.full(16, -1, dtype=np.int64)
    space = np.zeros(5, dtype=np.int64)
    for k in range(5):
        masks = [m for m in range(16) if bin(m).count("1") == k]
        acc = 0
        for m in masks:
            base[m] = acc
            acc += sizes[m]
        space[k] = acc
    return ext, strides, base, space


@njit(cache=True)
def _xor_merge(a, na, b, nb, out):
    i = 0
    j = 0
    k = 0
    while i < na and j < nb:
        av = a[i]
        bv = b[j]
        if av == bv:
            i += 1
            j += 1
        elif av < bv:
            out[k] = av
            k += 1
            i += 1
        else:
            out[k] = bv
            k += 1
            j += 1
    while i < na:
        out[k] = a[i]
        k += 1
        i += 1
    while j < nb:
        out[k] = b[j]
        k += 1
        j += 1
    return k


@njit(cache=True)
def _reduce_dim(
    doubled,  # flat uint8 bitmap, canonical (x-fastest) order
    dstr,  # int64[4] strides of the flattened doubled lattice; dstr[0] == 1
    dims,  # int64[4] toxel extents
    col_masks,  # int64[...] class bitmasks with popcount k, ascending
    base,  # int64[16] compact base per class, within its own dimension
    strides,  # int64[16, 4] class-lattice strides; strides[:, 0] == 1
    clear,  # int32[col space]; nonzero entries were pivot rows one dim up
    pivot,  # int32[row space], zero-initialized; filled with slot+1
):
    """Column-reduce one boundary matrix; returns the GF(2) rank.

    ``pivot`` doubles as the output: entries > 0 mark pivot rows, which the
    caller passes back in as ``clear`` for the next (lower) dimension.
    The rank is basis-independent, so the class-major column order here may
    differ from the enumeration order without affecting any result.
    """
    dx, dy, dz, dw = dims[0], dims[1], dims[2], dims[3]
    use_clear = clear.shape[0] > 0

    # growable pool of stored reduced columns
    pool = np.empty(1 << 16, dtype=np.int32)
    pool_len = 0
    starts = np.empty(1 << 12, dtype=np.int64)
    lens = np.empty(1 << 12, dtype=np.int64)
    nstored = 0

    cur = np.empty(64, dtype=np.int32)
    tmp = np.empty(64, dtype=np.int32)
    bnd = np.empty(8, dtype=np.int32)
    f_step = np.empty(4, dtype=np.int64)
    f_mask = np.empty(4, dtype=np.int64)
    part_w = np.empty(4, dtype=np.int64)
    part_z = np.empty(4, dtype=np.int64)
    part_y = np.empty(4, dtype=np.int64)
    rank = 0

    for mi in range(col_masks.shape[0]):
        mask = col_masks[mi]
        b0 = mask & 1
        b1 = mask >> 1 & 1
        b2 = mask >> 2 & 1
        b3 = mask >> 3 & 1
        ex = dx + 1 - b0  # anchor extents for this class
        ey = dy + 1 - b1
        ez = dz + 1 - b2
        ew = dw + 1 - b3
        nf = 0  # per spanned axis: the face class and its +face step
        for i in range(4):
            if mask >> i & 1:
                fm = mask & ~(1 << i)
                f_mask[nf] = fm
                f_step[nf] = strides[fm, i]
                nf += 1
        for vw in range(ew):
            dw_off = (2 * vw + b3) * dstr[3]
            cw_off = base[mask] + vw * strides[mask, 3]
            for j in range(nf):
                part_w[j] = base[f_mask[j]] + vw * strides[f_mask[j], 3]
            for vz in range(ez):
                dz_off = dw_off + (2 * vz + b2) * dstr[2]
                cz_off = cw_off + vz * strides[mask, 2]
                for j in range(nf):
                    part_z[j] = part_w[j] + vz * strides[f_mask[j], 2]
                for vy in range(ey):
                    dy_off = dz_off + (2 * vy + b1) * dstr[1]
                    cy_off = cz_off + vy * strides[mask, 1]
                    for j in range(nf):
                        part_y[j] = part_z[j] + vy * strides[f_mask[j], 1]
                    filt = dy_off + b0
                    for vx in range(ex):
                        if doubled[filt] == 0:
                            filt += 2
                            continue
                        filt += 2
                        if use_clear and clear[cy_off + vx] != 0:
                            continue

                        # boundary rows: minus and plus face per spanned axis
                        nb = 0
                        for j in range(nf):
                            addr = part_y[j] + vx
                            bnd[nb] = addr
                            bnd[nb + 1] = addr + f_step[j]
                            nb += 2
                        # insertion sort (at most 8 entries)
                        for a in range(1, nb):
                            key = bnd[a]
                            b = a - 1
                            while b >= 0 and bnd[b] > key:
                                bnd[b + 1] = bnd[b]
                                b -= 1
                            bnd[b + 1] = key
                        ncur = nb
                        for a in range(nb):
                            cur[a] = bnd[a]

                        while ncur > 0:
                            low = cur[ncur - 1]
                            slot = pivot[low]
                            if slot == 0:
                                # fresh pivot: store the reduced column
                                if nstored + 1 > starts.shape[0]:
                                    new_starts = np.empty(starts.shape[0] * 2, dtype=np.int64)
                                    new_lens = np.empty(starts.shape[0] * 2, dtype=np.int64)
                                    new_starts[:nstored] = starts[:nstored]
                                    new_lens[:nstored] = lens[:nstored]
                                    starts = new_starts
                                    lens = new_lens
                                while pool_len + ncur > pool.shape[0]:
                                    new_pool = np.empty(pool.shape[0] * 2, dtype=np.int32)
                                    new_pool[:pool_len] = pool[:pool_len]
                                    pool = new_pool
                                starts[nstored] = pool_len
                                lens[nstored] = ncur
                                pool[pool_len : pool_len + ncur] = cur[:ncur]
                                pool_len += ncur
                                nstored += 1
                                pivot[low] = nstored
                                rank += 1
                                break
                            s = starts[slot - 1]
                            ln = lens[slot - 1]
                            need = ncur + ln
                            if need > tmp.shape[0]:
                                tmp = np.empty(2 * need, dtype=np.int32)
                            ncur = _xor_merge(cur, ncur, pool[s : s + ln], ln, tmp)
                            if cur.shape[0] < tmp.shape[0]:
                                cur = np.empty(tmp.shape[0], dtype=np.int32)
                            cur, tmp = tmp, cur
    return rank


@njit(cache=True)
def _components_vertex_connectivity(data, dims, offsets):
    """Foreground component count; two toxels connect if their closed 4-cubes
    share any cell, i.e. under 80-neighbor (Chebyshev) adjacency."""
    n = data.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    dx, dy, dz, dw = dims[0], dims[1], dims[2], dims[3]
    count = 0
    idx = 0
    for w in range(dw):
        for z in range(dz):
            for y in range(dy):
                for x in range(dx):
                    if data[idx] == 0:
                        idx += 1
                        continue
                    parent[idx] = idx
                    count += 1
                    for oi in range(offsets.shape[0]):
                        nx = x + offsets[oi, 0]
                        ny = y + offsets[oi, 1]
                        nz = z + offsets[oi, 2]
                        nw = w + offsets[oi, 3]
                        if nx < 0 or nx >= dx or ny < 0 or ny >= dy:
                            continue
                        if nz < 0 or nz >= dz or nw < 0 or nw >= dw:
                            continue
                        nidx = ((nw * dz + nz) * dy + ny) * dx + nx
                        if parent[nidx] < 0:
                            continue
                        # find roots with path halving
                        a = idx
                        while parent[a] != a:
                            parent[a] = parent[parent[a]]
                            a = parent[a]
                        b = nidx
                        while parent[b] != b:
                            parent[b] = parent[parent[b]]
                            b = parent[b]
                        if a != b:
                            if a < b:
                                parent[b] = a
                            else:
                                parent[a] = b
                            count -= 1
                    idx += 1
    return count


@njit(cache=True)
def _enclosed_background_components(data, dims):
    """Background components under face connectivity that never touch the
    outermost toxel layer."""
    n = data.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    dx, dy, dz, dw = dims[0], dims[1], dims[2], dims[3]
    idx = 0
    for w in range(dw):
        for z in range(dz):
            for y in range(dy):
                for x in range(dx):
                    if data[idx] != 0:
                        idx += 1
                        continue
                    parent[idx] = idx
                    # face neighbors already visited in raster order
                    for axis in range(4):
                        if axis == 0:
                            if x == 0:
                                continue
                            nidx = idx - 1
                        elif axis == 1:
                            if y == 0:
                                continue
                            nidx = idx - dx
                        elif axis == 2:
                            if z == 0:
                                continue
                            nidx = idx - dx * dy
                        else:
                            if w == 0:
                                continue
                            nidx = idx - dx * dy * dz
                        if parent[nidx] < 0:
                            continue
                        a = idx
                        while parent[a] != a:
                            parent[a] = parent[parent[a]]
                            a = parent[a]
                        b = nidx
                        while parent[b] != b:
                            parent[b] = parent[parent[b]]
                            b = parent[b]
                        if a != b:
                            if a < b:
                                parent[b] = a
                            else:
                                parent[a] = b
                    idx += 1
    # mark roots of components that touch the grid boundary
    touches = np.zeros(n, dtype=np.uint8)
    idx = 0
    for w in range(dw):
        for z in range(dz):
            for y in range(dy):
                for x in range(dx):
                    if parent[idx] >= 0 and (
                        x == 0
                        or x == dx - 1
                        or y == 0
                        or y == dy - 1
                        or z == 0
                        or z == dz - 1
                        or w == 0
                        or w == dw - 1
                    ):
                        a = idx
                        while parent[a] != a:
                            a = parent[a]
                        touches[a] = 1
                    idx += 1
    count = 0
    for i in range(n):
        if parent[i] == i and touches[i] == 0:
            count += 1
    return count


# ---------------------------------------------------------------------------
# public operations


def _canonical_flat(grid: Grid4) -> np.ndarray:
    """Flat buffer in canonical (x-fastest) order."""
    return grid.data.reshape(-1, order="F")


def betti_reduction(
    target: Grid4 | CubicalComplex, cell_budget: int = DEFAULT_CELL_BUDGET
) -> BettiVector:
    """Betti numbers (b0..b3) of a binary grid by boundary-matrix reduction.

    Raises CellBudgetError before allocating reduction state for complexes
    larger than ``cell_budget`` cells.
    """
    complex_ = target if isinstance(target, CubicalComplex) else build_complex(target)
    if complex_.total_cells > cell_budget:
        raise CellBudgetError(complex_.total_cells, cell_budget)

    dims = np.asarray(complex_.dims, dtype=np.int64)
    ext, strides, base, space = _class_tables(complex_.dims)
    dshape = complex_.doubled.shape
    # canonical x-fastest flattening keeps the innermost kernel loop sequential
    dstr = np.array(
        [1, dshape[0], dshape[0] * dshape[1], dshape[0] * dshape[1] * dshape[2]],
        dtype=np.int64,
    )
    flat = complex_.doubled.reshape(-1, order="F")
    if not flat.flags.c_contiguous:
        flat = np.ascontiguousarray(flat)

    masks_by_dim = [
        np.array([m for m in range(16) if bin(m).count("1") == k], dtype=np.int64)
        for k in range(5)
    ]

    ranks = [0] * 6  # ranks[k] = rank of d_k; d_0 and d_5 are zero maps
    clear = np.zeros(0, dtype=np.int32)
    for k in (4, 3, 2, 1):
        pivot = np.zeros(space[k - 1], dtype=np.int32)
        ranks[k] = int(
            _reduce_dim(flat, dstr, dims, masks_by_dim[k], base, strides, clear, pivot)
        )
        clear = pivot

    n = complex_.cell_counts
    betti = [n[k] - ranks[k] - ranks[k + 1] for k in range(5)]
    if betti[4] != 0:
        raise AssertionError(f"top homology must vanish for grids, got beta4={betti[4]}")
    result = BettiVector(*betti[:4])
    if complex_.euler_characteristic != result.euler:
        raise AssertionError(
            f"Euler identity violated: cells give {complex_.euler_characteristic}, "
            f"betti give {result.euler}"
        )
    return result


# offsets with negative raster displacement; the other half is seen from the
# neighbor's side
_NEG_OFFSETS = np.array(
    [
        o
        for o in itertools.product((-1, 0, 1), repeat=4)
        if o != (0, 0, 0, 0)
        # canonical raster order: w most significant, x least
        and (o[3], o[2], o[1], o[0]) < (0, 0, 0, 0)
    ],
    dtype=np.int64,
)


def beta0_unionfind(grid: Grid4) -> int:
    """Foreground component count under full vertex (80-neighbor) connectivity."""
    if grid.dtype is not GridDType.BINARY8:
        raise TypeError("component counting is defined for Binary8 grids")
    return int(
        _components_vertex_connectivity(
            _canonical_flat(grid), np.asarray(grid.dims, dtype=np.int64), _NEG_OFFSETS
        )
    )


def beta3_duality(grid: Grid4) -> int:
    """b3 as the number of enclosed background pockets (face connectivity).

    Exact for the foreground complex whenever the outermost toxel layer is
    all foreground, as generated samples guarantee.
    """
    if grid.dtype is not GridDType.BINARY8:
        raise TypeError("component counting is defined for Binary8 grids")
    return int(
        _enclosed_background_components(
            _canonical_flat(grid), np.asarray(grid.dims, dtype=np.int64)
        )
    )


# ---------------------------------------------------------------------------
# agreement statistics


@dataclass(frozen=True)
class AgreementReport:
    """Per-Betti agreement percentages between labels and computed vectors."""

    per_beta: tuple  # four percentages
    complete_match: float  # percentage with all four equal
    count: int = 0

    @property
    def combined(self) -> float:
        """Arithmetic mean of the four per-Betti accuracies."""
        return sum(self.per_beta) / 4.0

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "per_beta": [round(v, 10) for v in self.per_beta],
            "combined": round(self.combined, 10),
            "complete_match": round(self.complete_match, 10),
        }


def agreement(labels, computed) -> AgreementReport:
    """Compare two equal-length lists of BettiVector coordinate-wise."""
    labels = list(labels)
    computed = list(computed)
    if len(labels) != len(computed):
        raise ValueError(f"length mismatch: {len(labels)} labels vs {len(computed)} computed")
    n = len(labels)
    if n == 0:
        raise ValueError("cannot score empty lists")
    per = []
    for i in range(4):
        hits = sum(1 for a, b in zip(labels, computed) if a.astuple()[i] == b.astuple()[i])
        per.append(100.0 * hits / n)
    complete = 100.0 * sum(1 for a, b in zip(labels, computed) if a == b) / n
    return AgreementReport(per_beta=tuple(per), complete_match=complete, count=n)
