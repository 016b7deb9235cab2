"""Staircase safety speed scaling.

The robot may move at a fraction ``s`` of its nominal speed, where ``s``
is a piecewise-constant (staircase) function of the human-robot distance:
the closer the human, the lower the allowed scaling, down to a full halt.
Intervals are right-closed, so a distance exactly on a band edge yields
the lower (more conservative) scaling value.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Position3:
    """A point in the cell, meters, finite components only."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"Position3.{name} must be finite, got {v!r}")

    @classmethod
    def from_sequence(cls, seq) -> "Position3":
        x, y, z = (float(v) for v in seq)
        return cls(x, y, z)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Position3") -> float:
        return math.dist(self.as_tuple(), other.as_tuple())


@dataclass(frozen=True)
class StaircaseSafetyFunction:
    """Ordered scaling levels plus the distance thresholds separating them.

    ``levels`` holds the P scaling values in strictly increasing order,
    each in [0, 1].  ``thresholds`` holds the P-1 band edges in meters,
    strictly increasing and positive.  Band p covers distances in
    ``(thresholds[p-1], thresholds[p]]``; the innermost band starts at 0
    and the outermost extends to infinity.  ``metric`` names the distance
    function; only Euclidean point distance is evaluable here, but the
    field keeps alternative metrics representable in configs.
    """

    levels: tuple[float, ...]
    thresholds: tuple[float, ...]
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        levels = tuple(float(v) for v in self.levels)
        thresholds = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "thresholds", thresholds)
        if len(levels) < 1:
            raise ValueError("at least one scaling level is required")
        if len(thresholds) != len(levels) - 1:
            raise ValueError(
                f"{len(levels)} levels require {len(levels) - 1} thresholds, got {len(thresholds)}"
            )
        for v in levels:
            if not math.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ValueError(f"scaling levels must lie in [0, 1], got {v!r}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"scaling levels must be strictly increasing, got {levels}")
        for d in thresholds:
            if not math.isfinite(d) or d <= 0.0:
                raise ValueError(f"thresholds must be positive and finite, got {d!r}")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError(f"thresholds must be strictly increasing, got {thresholds}")
        if self.metric != "euclidean":
            raise ValueError(f"unsupported metric {self.metric!r} (only 'euclidean' is evaluable)")

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def top_level(self) -> float:
        return self.levels[-1]

    def scaling_at_distance(self, d: float) -> float:
        """Scaling value for a human-robot distance ``d`` in meters."""
        d = float(d)
        if not math.isfinite(d) or d < 0.0:
            raise ValueError(f"distance must be finite and non-negative, got {d!r}")
        return self.levels[bisect_left(self.thresholds, d)]

    def scaling_at_distances(self, d: np.ndarray) -> np.ndarray:
        """Vectorized band lookup over an array of distances."""
        d = np.asarray(d, dtype=float)
        if d.size and (not np.all(np.isfinite(d)) or np.any(d < 0)):
            raise ValueError("distances must be finite and non-negative")
        idx = np.searchsorted(np.asarray(self.thresholds), d, side="left")
        return np.asarray(self.levels)[idx]

    def scaling(self, xr: Position3, xh: Position3) -> float:
        return self.scaling_at_distance(xr.distance_to(xh))

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "thresholds": list(self.thresholds), "metric": self.metric}

    @classmethod
    def from_dict(cls, data: dict) -> "StaircaseSafetyFunction":
        return cls(
            levels=tuple(data["levels"]),
            thresholds=tuple(data["thresholds"]),
            metric=data.get("metric", "euclidean"),
        )


def eval_scaling(f: StaircaseSafetyFunction, xr: Position3, xh: Position3) -> float:
    """Scaling value for robot at ``xr`` and human at ``xh``."""
    return f.scaling(xr, xh)


def eval_scaling_by_distance(f: StaircaseSafetyFunction, d: float) -> float:
    """Scaling value for a separation distance ``d``."""
    return f.scaling_at_distance(d)
