"""Axis-aligned box geometry: area, circumference, intersection over union.

Boxes live in continuous image coordinates (row, column). All quantities use
the continuous convention, i.e. a box spanning [0, 10] x [0, 10] has area 100,
not the discrete (w + 1) * (h + 1) pixel count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box spanning [r_min, r_max] x [c_min, c_max]."""

    r_min: float
    r_max: float
    c_min: float
    c_max: float

    def __post_init__(self) -> None:
        for v in (self.r_min, self.r_max, self.c_min, self.c_max):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self!r}")
        if self.r_min > self.r_max or self.c_min > self.c_max:
            raise ValueError(
                "box must satisfy r_min <= r_max and c_min <= c_max, "
                f"got {self!r}"
            )


def area(box: BBox) -> float:
    """Continuous area; 0 for degenerate (zero-extent) boxes."""
    return (box.r_max - box.r_min) * (box.c_max - box.c_min)


def circumference(box: BBox) -> float:
    """Perimeter 2 * height + 2 * width."""
    return 2.0 * (box.r_max - box.r_min) + 2.0 * (box.c_max - box.c_min)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes.

    Purely geometric; any class-match side condition is the caller's job.
    Returns 0 when the boxes do not overlap or when the union has zero area
    (two coincident degenerate boxes).
    """
    inter_h = min(a.r_max, b.r_max) - max(a.r_min, b.r_min)
    if inter_h <= 0.0:
        return 0.0
    inter_w = min(a.c_max, b.c_max) - max(a.c_min, b.c_min)
    if inter_w <= 0.0:
        return 0.0
    inter = inter_h * inter_w
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union
