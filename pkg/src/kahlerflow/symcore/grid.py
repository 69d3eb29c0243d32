"""Points and rectangular sample grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple

import numpy as np

Point = Mapping[str, object]


@dataclass(frozen=True)
class GridSpec:
    """Per-coordinate closed intervals with a sample count each.

    Enumeration order is C order over ``coords`` (last coordinate fastest).
    """

    coords: Tuple[str, ...]
    intervals: Tuple[Tuple[float, float], ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "intervals", tuple((float(a), float(b)) for a, b in self.intervals))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not (len(self.coords) == len(self.intervals) == len(self.counts)):
            raise ValueError("coords, intervals and counts must have equal length")
        for (lo, hi), n in zip(self.intervals, self.counts):
            if not lo < hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
            if n < 2:
                raise ValueError("each coordinate needs at least 2 samples")

    @classmethod
    def box(cls, coords: Sequence[str], lo: float, hi: float, count: int) -> "GridSpec":
        k = len(coords)
        return cls(tuple(coords), ((lo, hi),) * k, (count,) * k)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axes(self):
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.intervals, self.counts)]

    def mesh(self) -> np.ndarray:
        """Array of shape ``(len(coords), size)`` in enumeration order."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids])

    def points(self) -> dict:
        return dict(zip(self.coords, self.mesh()))

    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.intervals, self.counts))
