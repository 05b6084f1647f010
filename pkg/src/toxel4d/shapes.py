"""Implicit 4D cavity shapes: membership tests, hypervolumes, radius sampling.

Four manifolds-with-boundary can be carved out of a sample:

* ``BALL4``       -- solid 4-ball B^4
* ``TORUS_S1B3``  -- circle x solid 3-ball, S^1 x B^3 (a 4D donut)
* ``TORUS_S2B2``  -- 2-sphere x disk, S^2 x B^2 (a thickened spherical shell)
* ``TORUS_T2B2``  -- torus x disk, S^1 x S^1 x B^2 (a thickened 2-torus)

Each is described by an implicit inequality in the shape's local (centered,
unrotated) frame; boundary points count as members.  The tube radius ``a``
is the free parameter.  Dependent radii are pinned so the shapes cannot
self-intersect: R = 2a for the single-circle tori, and r = 2a with
R = 2a*(1 + sin(alpha)) for the 2-torus, whose ``alpha`` tilts the middle
circle between the w-axis (alpha=0) and the radial xy-direction (alpha=pi/2).

``radius_interval`` rescales the sampled ``a`` per kind so all four kinds
cover the same hypervolume range [16*pi^3*a_min^4, 32*pi^3*a_max^4].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ShapeKind(str, Enum):
    BALL4 = "ball4"
    TORUS_S1B3 = "torus_s1b3"
    TORUS_S2B2 = "torus_s2b2"
    TORUS_T2B2 = "torus_t2b2"


ALL_KINDS = tuple(ShapeKind)


@dataclass(frozen=True)
class ShapeSpec:
    """A fully parameterized cavity shape (radii in toxel units)."""

    kind: ShapeKind
    a: float
    R: float = 0.0
    r: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        """Basic validity only.  The implicit formulas accept any radii; the
        self-intersection-free couplings (R = 2a, r = 2a, R = R(alpha)) are
        applied by make_shape/sample_shape, which is all the generator uses."""
        if self.a <= 0:
            raise ValueError(f"tube radius a must be positive, got {self.a}")
        if self.R < 0 or self.r < 0:
            raise ValueError(f"major radii must be nonnegative, got R={self.R}, r={self.r}")
        if not 0.0 <= self.alpha <= math.pi / 2 + 1e-12:
            raise ValueError(f"alpha must lie in [0, pi/2], got {self.alpha}")
        if self.kind is ShapeKind.BALL4 and (self.R != 0.0 or self.r != 0.0):
            raise ValueError("a 4-ball has no major radii")

    @property
    def is_canonical(self) -> bool:
        """True when the dependent radii follow the sampling couplings."""
        k = self.kind
        if k is ShapeKind.BALL4:
            return True
        if k in (ShapeKind.TORUS_S1B3, ShapeKind.TORUS_S2B2):
            return math.isclose(self.R, 2.0 * self.a, rel_tol=1e-12)
        return math.isclose(self.r, 2.0 * self.a, rel_tol=1e-12) and math.isclose(
            self.R, major_radius(self.a, self.alpha), rel_tol=1e-12
        )


def major_radius(a: float, alpha: float) -> float:
    """R(alpha) = 2a*(1 + sin(alpha)) for the 2-torus: the radial extent of the
    tilted middle circle grows with sin(alpha), so this keeps an inner gap of
    exactly ``a`` at every tilt (R at alpha=0 is 2a, at alpha=pi/2 it is 4a)."""
    return 2.0 * a * (1.0 + math.sin(alpha))


def make_shape(kind: ShapeKind, a: float, alpha: float = 0.0) -> ShapeSpec:
    """Build a valid ShapeSpec from the free parameters (a, and alpha for the 2-torus)."""
    kind = ShapeKind(kind)
    if kind is ShapeKind.BALL4:
        return ShapeSpec(kind, a)
    if kind in (ShapeKind.TORUS_S1B3, ShapeKind.TORUS_S2B2):
        return ShapeSpec(kind, a, R=2.0 * a)
    return ShapeSpec(kind, a, R=major_radius(a, alpha), r=2.0 * a, alpha=alpha)


def membership(shape: ShapeSpec, points) -> np.ndarray | bool:
    """True where a local-frame point lies inside the shape (boundary inclusive).

    ``points`` is a length-4 vector or an (..., 4) array; the return matches
    the leading shape.
    """
    p = np.asarray(points, dtype=np.float64)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    x, y, z, w = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    a2 = shape.a * shape.a
    k = shape.kind
    if k is ShapeKind.BALL4:
        inside = x * x + y * y + z * z + w * w <= a2
    elif k is ShapeKind.TORUS_S1B3:
        rho = np.sqrt(x * x + y * y)
        inside = (rho - shape.R) ** 2 + z * z + w * w <= a2
    elif k is ShapeKind.TORUS_S2B2:
        rho = np.sqrt(x * x + y * y + z * z)
        inside = (rho - shape.R) ** 2 + w * w <= a2
    else:
        A = math.cos(shape.alpha)
        B = math.sin(shape.alpha)
        u = np.sqrt(x * x + y * y) - shape.R
        inside = (np.sqrt((B * u - A * w) ** 2 + z * z) - shape.r) ** 2 + (
            A * u + B * w
        ) ** 2 <= a2
    return bool(inside[0]) if scalar else inside


def hypervolume(shape: ShapeSpec) -> float:
    """Exact 4D volume of the shape."""
    a = shape.a
    k = shape.kind
    if k is ShapeKind.BALL4:
        return math.pi**2 / 2.0 * a**4
    if k is ShapeKind.TORUS_S1B3:
        return 8.0 / 3.0 * math.pi**2 * shape.R * a**3
    if k is ShapeKind.TORUS_S2B2:
        return 4.0 * math.pi**2 * shape.R**2 * a**2
    return 4.0 * math.pi**3 * shape.R * shape.r * a**2


def bounding_radius(shape: ShapeSpec) -> float:
    """A radius rho with: membership(p) implies ||p|| <= rho."""
    k = shape.kind
    if k is ShapeKind.BALL4:
        return shape.a
    if k in (ShapeKind.TORUS_S1B3, ShapeKind.TORUS_S2B2):
        return shape.R + shape.a
    return shape.R + shape.r + shape.a


def radius_interval(kind: ShapeKind, a_min: float, a_max: float) -> tuple[float, float]:
    """The interval the tube radius ``a`` is drawn from for this kind.

    Chosen so every kind's hypervolume spans [16*pi^3*a_min^4, 32*pi^3*a_max^4],
    the natural range of the 2-torus whose ``a`` is sampled directly.
    """
    if a_min <= 0 or a_max < a_min:
        raise ValueError(f"need 0 < a_min <= a_max, got [{a_min}, {a_max}]")
    kind = ShapeKind(kind)
    if kind is ShapeKind.BALL4:
        return 2 * (2 * math.pi) ** 0.25 * a_min, 2 * (4 * math.pi) ** 0.25 * a_max
    if kind is ShapeKind.TORUS_S1B3:
        return (3 * math.pi) ** 0.25 * a_min, (6 * math.pi) ** 0.25 * a_max
    if kind is ShapeKind.TORUS_S2B2:
        return math.pi**0.25 * a_min, (2 * math.pi) ** 0.25 * a_max
    return a_min, a_max


@dataclass(frozen=True)
class RadiusRanges:
    """The base tube-radius range, plus per-kind derived intervals."""

    a_min: float = 2.4
    a_max: float = 6.4
    intervals: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.a_min <= 0 or self.a_max < self.a_min:
            raise ValueError(f"need 0 < a_min <= a_max, got [{self.a_min}, {self.a_max}]")
        object.__setattr__(
            self,
            "intervals",
            {k: radius_interval(k, self.a_min, self.a_max) for k in ALL_KINDS},
        )

    def interval(self, kind: ShapeKind) -> tuple[float, float]:
        return self.intervals[ShapeKind(kind)]


def sample_shape(rng: np.random.Generator, kind: ShapeKind, ranges: RadiusRanges) -> ShapeSpec:
    """Draw a shape: a uniform in its per-kind interval, alpha uniform on [0, pi/2]."""
    kind = ShapeKind(kind)
    lo, hi = ranges.interval(kind)
    a = float(rng.uniform(lo, hi))
    alpha = float(rng.uniform(0.0, math.pi / 2)) if kind is ShapeKind.TORUS_T2B2 else 0.0
    return make_shape(kind, a, alpha)
