"""Labeled sample generation: carve random cavities into a solid 4D cube.

Placement rules keep every label analytic: each cavity's bounding ball must
stay ``boundary_margin`` toxels clear of the grid faces (so the outermost
toxel layer is never disturbed) and bounding balls of distinct cavities must
be separated by at least ``spacing``.  Under these rules cavities neither
merge nor touch the boundary, so the sample's Betti vector is exactly
(1,0,0,0) plus the sum of the per-kind hole contributions.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .betti import BettiVector
from .errors import PlacementError
from .grid4 import Grid4, GridDType
from .rotation import Rot4, random_rotation
from .shapes import ALL_KINDS, RadiusRanges, ShapeKind, ShapeSpec, bounding_radius, membership, sample_shape

#: Hole counts each cavity kind adds to the solid cube, per dimension 0..3.
#: The cube supplies the single connected component (b0 stays 1).
_CONTRIBUTIONS = {
    ShapeKind.BALL4: BettiVector(0, 0, 0, 1),
    ShapeKind.TORUS_S1B3: BettiVector(0, 0, 1, 1),
    ShapeKind.TORUS_S2B2: BettiVector(0, 1, 0, 1),
    ShapeKind.TORUS_T2B2: BettiVector(0, 1, 2, 1),
}


def betti_contribution(kind: ShapeKind) -> BettiVector:
    """Holes a cavity of this kind introduces (b0 excluded; the cube owns it)."""
    return _CONTRIBUTIONS[ShapeKind(kind)]


@dataclass(frozen=True)
class Cavity:
    """A placed shape: local geometry, world center, and orientation."""

    shape: ShapeSpec
    center: np.ndarray
    rot: Rot4

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.shape != (4,):
            raise ValueError(f"center must be a 4-vector, got shape {center.shape}")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

    @property
    def radius(self) -> float:
        return bounding_radius(self.shape)


@dataclass(frozen=True)
class GenConfig:
    grid_size: int = 128
    min_holes: int = 1
    max_holes: int = 48
    spacing: float = 6.5
    boundary_margin: float = 1.0
    a_min: float = 2.4
    a_max: float = 6.4
    kind_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    max_placement_attempts: int = 2000

    def __post_init__(self):
        if self.grid_size < 3:
            raise ValueError("grid_size must be at least 3")
        if self.min_holes < 1 or self.max_holes < self.min_holes:
            raise ValueError(f"need 1 <= min_holes <= max_holes, got {self.min_holes}..{self.max_holes}")
        if self.spacing < 0 or self.boundary_margin < 0:
            raise ValueError("spacing and boundary_margin must be nonnegative")
        if len(self.kind_weights) != 4 or any(w < 0 for w in self.kind_weights):
            raise ValueError("kind_weights must be 4 nonnegative reals")
        if sum(self.kind_weights) <= 0:
            raise ValueError("at least one kind weight must be positive")
        RadiusRanges(self.a_min, self.a_max)  # validates the radius range

    @property
    def ranges(self) -> RadiusRanges:
        return RadiusRanges(self.a_min, self.a_max)


@dataclass(frozen=True)
class SampleLabel:
    betti: BettiVector
    cavities: tuple
    seed: int
    grid_size: int

    def to_json(self) -> str:
        payload = {
            "betti": list(self.betti.astuple()),
            "grid_size": self.grid_size,
            "seed": self.seed,
            "cavities": [
                {
                    "kind": cav.shape.kind.value,
                    "a": cav.shape.a,
                    "r": cav.shape.r,
                    "R": cav.shape.R,
                    "alpha": cav.shape.alpha,
                    "center": [float(c) for c in cav.center],
                    "rot": [float(v) for v in cav.rot.m.reshape(-1)],  # row-major
                }
                for cav in self.cavities
            ],
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SampleLabel":
        payload = json.loads(text)
        cavities = tuple(
            Cavity(
                shape=ShapeSpec(
                    kind=ShapeKind(c["kind"]),
                    a=c["a"],
                    R=c["R"],
                    r=c["r"],
                    alpha=c["alpha"],
                ),
                center=np.asarray(c["center"], dtype=np.float64),
                rot=Rot4(np.asarray(c["rot"], dtype=np.float64).reshape(4, 4)),
            )
            for c in payload["cavities"]
        )
        return cls(
            betti=BettiVector.from_sequence(payload["betti"]),
            cavities=cavities,
            seed=int(payload["seed"]),
            grid_size=int(payload["grid_size"]),
        )


def carve(grid: Grid4, cavity: Cavity) -> tuple[Grid4, int]:
    """Zero out every toxel whose coordinate falls inside the cavity.

    Only the cavity's bounding box is visited.  Returns the new grid and the
    number of toxels flipped 1 -> 0.
    """
    if grid.dtype is not GridDType.BINARY8:
        raise TypeError("carving is defined for Binary8 grids")
    data = grid.data.copy()
    count = _carve_into(data, cavity)
    return Grid4(data, GridDType.BINARY8), count


def _carve_into(data: np.ndarray, cavity: Cavity) -> int:
    rho = cavity.radius
    center = cavity.center
    los = [max(0, math.ceil(c - rho)) for c in center]
    his = [min(d - 1, math.floor(c + rho)) for c, d in zip(center, data.shape)]
    if any(lo > hi for lo, hi in zip(los, his)):
        return 0
    xs = np.arange(los[0], his[0] + 1, dtype=np.float64) - center[0]
    ys = np.arange(los[1], his[1] + 1, dtype=np.float64) - center[1]
    zs = np.arange(los[2], his[2] + 1, dtype=np.float64) - center[2]
    m = cavity.rot.m
    changed = 0
    # slab over w to bound the temporary point block
    for w in range(los[3], his[3] + 1):
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        pts = np.stack([gx, gy, gz, np.full_like(gx, w - center[3])], axis=-1)
        local = pts.reshape(-1, 4) @ m  # rot^T applied to row vectors
        inside = membership(cavity.shape, local).reshape(gx.shape)
        sub = data[los[0] : his[0] + 1, los[1] : his[1] + 1, los[2] : his[2] + 1, w]
        changed += int((sub[inside] == 1).sum())
        sub[inside] = 0
    return changed


def place_cavities(rng: np.random.Generator, config: GenConfig) -> tuple[Grid4, SampleLabel]:
    """Carve cavities until a uniformly drawn hole target is met exactly.

    Kinds whose contribution would overshoot the remaining hole budget are
    excluded from the draw.  Raises PlacementError (naming the attempt count)
    once max_placement_attempts draws failed the boundary or spacing rules.
    """
    ranges = config.ranges
    weights = {k: float(w) for k, w in zip(ALL_KINDS, config.kind_weights)}
    holes_of = {k: betti_contribution(k).holes for k in ALL_KINDS}

    target = int(rng.integers(config.min_holes, config.max_holes + 1))
    remaining = target
    data = np.ones((config.grid_size,) * 4, dtype=np.uint8)
    accepted: list[Cavity] = []
    attempts = 0
    size = config.grid_size

    while remaining > 0:
        eligible = [k for k in ALL_KINDS if weights[k] > 0 and holes_of[k] <= remaining]
        if not eligible:
            raise PlacementError(
                attempts,
                f"no eligible cavity kind for remaining hole budget {remaining} "
                f"(attempt {attempts})",
            )
        probs = np.array([weights[k] for k in eligible])
        kind = eligible[int(rng.choice(len(eligible), p=probs / probs.sum()))]
        shape = sample_shape(rng, kind, ranges)
        rot = random_rotation(rng)
        rho = bounding_radius(shape)
        lo = config.boundary_margin + rho
        hi = (size - 1) - config.boundary_margin - rho

        attempts += 1
        if attempts > config.max_placement_attempts:
            raise PlacementError(attempts)
        if lo > hi:  # shape too large for this grid; counts as a failed attempt
            continue
        center = rng.uniform(lo, hi, 4)
        ok = all(
            np.linalg.norm(center - cav.center) >= rho + cav.radius + config.spacing
            for cav in accepted
        )
        if not ok:
            continue
        cavity = Cavity(shape=shape, center=center, rot=rot)
        _carve_into(data, cavity)
        accepted.append(cavity)
        remaining -= holes_of[kind]

    betti = BettiVector(1, 0, 0, 0)
    for cav in accepted:
        betti = betti + betti_contribution(cav.shape.kind)
    label = SampleLabel(betti=betti, cavities=tuple(accepted), seed=0, grid_size=size)
    return Grid4(data, GridDType.BINARY8), label


# ---------------------------------------------------------------------------
# batch generation

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit mixing hash (splitmix64 round) of (master_seed, index)."""
    z = (master_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def generate_sample(seed: int, config: GenConfig) -> tuple[Grid4, SampleLabel]:
    """One deterministic sample from its seed."""
    rng = np.random.default_rng(seed)
    grid, label = place_cavities(rng, config)
    return grid, SampleLabel(
        betti=label.betti, cavities=label.cavities, seed=seed, grid_size=label.grid_size
    )


@dataclass
class BatchResult:
    out_dir: Path
    manifest_path: Path
    entries: list = field(default_factory=list)  # (grid_name, label_name, BettiVector)
    failures: list = field(default_factory=list)  # (index, attempts) pairs


def generate_sample_retrying(
    seed: int, config: GenConfig, retries: int = 3
) -> tuple[Grid4, SampleLabel]:
    """generate_sample, re-seeding (derive_seed of the sample seed) on
    placement failure up to ``retries`` times."""
    last_exc: PlacementError | None = None
    for retry in range(retries + 1):
        try:
            return generate_sample(seed if retry == 0 else derive_seed(seed, retry), config)
        except PlacementError as exc:
            last_exc = exc
    raise last_exc


def _emit_sample(args) -> tuple:
    index, master_seed, config, out_dir, retries = args
    try:
        grid, label = generate_sample_retrying(derive_seed(master_seed, index), config, retries)
    except PlacementError as exc:
        return index, None, None, exc.attempts
    grid_name = f"sample_{index:05d}.tox4"
    label_name = f"sample_{index:05d}.json"
    grid.write(Path(out_dir) / grid_name)
    (Path(out_dir) / label_name).write_text(label.to_json())
    return index, grid_name, label_name, label.betti.astuple()


def generate_batch(
    master_seed: int,
    count: int,
    config: GenConfig,
    out_dir,
    jobs: int = 1,
    retries: int = 3,
) -> BatchResult:
    """Emit ``count`` grid+label pairs plus a manifest.

    Sample ``i`` uses seed derive_seed(master_seed, i), so outputs are
    byte-identical regardless of worker count or scheduling.  Samples whose
    placement fails ``retries`` re-seeded regenerations are reported in the
    result instead of aborting the batch.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(i, master_seed, config, out_dir, retries) for i in range(count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_emit_sample, tasks))
    else:
        raw = [_emit_sample(t) for t in tasks]

    result = BatchResult(out_dir=out_dir, manifest_path=out_dir / "manifest.tsv")
    lines = []
    for index, grid_name, label_name, payload in sorted(raw):
        if grid_name is None:
            result.failures.append((index, payload))
            continue
        betti = BettiVector.from_sequence(payload)
        result.entries.append((grid_name, label_name, betti))
        lines.append(f"{grid_name}\t{label_name}\t{' '.join(str(b) for b in betti.astuple())}")
    result.manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return result


def read_manifest(manifest_path) -> list:
    """Manifest rows as (grid_path, label_path, BettiVector), paths resolved
    relative to the manifest's directory."""
    manifest_path = Path(manifest_path)
    rows = []
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        grid_name, label_name, betti_str = line.split("\t")
        betti = BettiVector.from_sequence(betti_str.split())
        rows.append((manifest_path.parent / grid_name, manifest_path.parent / label_name, betti))
    return rows
