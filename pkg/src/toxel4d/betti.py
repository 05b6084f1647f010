"""Betti vectors: the label type and the homology-engine output."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class BettiVector:
    """(b0, b1, b2, b3) with the derived Euler characteristic."""

    b0: int = 0
    b1: int = 0
    b2: int = 0
    b3: int = 0

    def __post_init__(self):
        for name in ("b0", "b1", "b2", "b3"):
            v = getattr(self, name)
            if not isinstance(v, (int,)) or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v!r}")

    @property
    def euler(self) -> int:
        return self.b0 - self.b1 + self.b2 - self.b3

    @property
    def holes(self) -> int:
        """Combined 1-, 2-, and 3-dimensional hole count."""
        return self.b1 + self.b2 + self.b3

    def __add__(self, other: "BettiVector") -> "BettiVector":
        return BettiVector(
            self.b0 + other.b0,
            self.b1 + other.b1,
            self.b2 + other.b2,
            self.b3 + other.b3,
        )

    def astuple(self) -> tuple:
        return (self.b0, self.b1, self.b2, self.b3)

    @classmethod
    def from_sequence(cls, seq) -> "BettiVector":
        b0, b1, b2, b3 = (int(v) for v in seq)
        return cls(b0, b1, b2, b3)


def euler(betti: BettiVector) -> int:
    """Alternating sum b0 - b1 + b2 - b3."""
    return betti.euler
