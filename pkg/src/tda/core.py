"""Shared value types: frames, boxes, domain labels."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError


class DomainLabel(enum.Enum):
    """Which side of the day/night pair a sample comes from."""

    SOURCE_DAY = 1
    TARGET_NIGHT = 0

    @property
    def target(self) -> float:
        """Binary classification target (day = 1, night = 0)."""
        return float(self.value)

    @property
    def flipped_target(self) -> float:
        """The label that would deceive a domain classifier."""
        return 1.0 - float(self.value)


@dataclass(frozen=True)
class FrameTensor:
    """A single video frame as a (3, H, W) float array in [0, 1]."""

    pixels: np.ndarray
    frame_index: int

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[0] != 3:
            raise ShapeError(f"frame must be (3, H, W), got {px.shape}")
        if px.shape[1] < 16 or px.shape[2] < 16:
            raise ShapeError(f"frame sides must be >= 16, got {px.shape[1:]}")
        if not np.isfinite(px).all():
            raise ContractError("frame contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ContractError("frame values must lie in [0, 1]")
        if self.frame_index < 0:
            raise ContractError("frame_index must be non-negative")

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner (x, y) plus extent (w, h), pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(np.isfinite(v) for v in vals):
            raise ContractError(f"box values must be finite, got {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ContractError(f"box extent must be positive, got w={self.w} h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)
