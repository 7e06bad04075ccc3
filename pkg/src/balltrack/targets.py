"""Ground-truth target maps for heatmap training.

A target map is a (height, width) float array in [0, 1] whose support is the
closed disc of radius ``d`` around the annotated ball center. Two flavours
exist: a binary disc, and a clamped Gaussian profile whose non-zero minimum
(the value on the disc boundary) equals ``c_min``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Position = tuple[float, float]
Size = tuple[int, int]  # (width, height)


@dataclass(frozen=True)
class BallLabel:
    """Per-frame annotation: ball pixel position, or invisible."""

    frame_index: int
    visible: bool
    position: Position | None = None

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if self.visible and self.position is None:
            raise ValueError("visible label requires a position")
        if not self.visible and self.position is not None:
            raise ValueError("invisible label must not carry a position")


@dataclass(frozen=True)
class GtMapConfig:
    """Target-map generation parameters."""

    d: float = 2.5
    c_min: float = 0.7
    mode: str = "binary"  # "binary" or "real"

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"d must be > 0, got {self.d}")
        if not 0.0 < self.c_min < 1.0:
            raise ValueError(f"c_min must be in (0, 1), got {self.c_min}")
        if self.mode not in ("binary", "real"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _check_center(center: Position, size: Size):
    w, h = size
    x, y = center
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"center {center} outside map bounds {w}x{h}")


def _squared_distances(center: Position, size: Size) -> np.ndarray:
    w, h = size
    cx, cy = center
    ys = np.arange(h, dtype=np.float64) - cy
    xs = np.arange(w, dtype=np.float64) - cx
    return ys[:, None] ** 2 + xs[None, :] ** 2


def binary_map(center: Position, size: Size, d: float = 2.5) -> np.ndarray:
    """Disc indicator: 1 on cells within Euclidean distance d of center, else 0.

    Cell centers sit at integer coordinates; ``center`` may be subpixel.
    """
    if d <= 0:
        raise ValueError(f"d must be > 0, got {d}")
    _check_center(center, size)
    dist2 = _squared_distances(center, size)
    return (dist2 <= d * d).astype(np.float64)


def real_map(center: Position, size: Size, d: float = 2.5, c_min: float = 0.7) -> np.ndarray:
    """Clamped Gaussian profile on the same disc support as :func:`binary_map`.

    Inside the disc the value is min(C * exp(-r^2 / d^2), 1) with C = c_min * e,
    so the profile evaluated at distance exactly d equals c_min. Values are
    radially non-increasing and clamp to 1 near the center.
    """
    if d <= 0:
        raise ValueError(f"d must be > 0, got {d}")
    if not 0.0 < c_min < 1.0:
        raise ValueError(f"c_min must be in (0, 1), got {c_min}")
    _check_center(center, size)
    dist2 = _squared_distances(center, size)
    scale = c_min * math.e
    values = np.minimum(scale * np.exp(-dist2 / (d * d)), 1.0)
    values[dist2 > d * d] = 0.0
    return values


def empty_map(size: Size) -> np.ndarray:
    """All-zero target, used for frames with no visible ball."""
    w, h = size
    if w <= 0 or h <= 0:
        raise ValueError(f"size must be positive, got {size}")
    return np.zeros((h, w), dtype=np.float64)


def make_map(label: BallLabel, size: Size, config: GtMapConfig, mode: str | None = None) -> np.ndarray:
    """Target map for one label, honoring an optional per-frame mode override."""
    if not label.visible:
        return empty_map(size)
    mode = config.mode if mode is None else mode
    if mode == "binary":
        return binary_map(label.position, size, config.d)
    if mode == "real":
        return real_map(label.position, size, config.d, config.c_min)
    raise ValueError(f"unknown mode {mode!r}")


def scale_position(position: Position, from_size: Size, to_size: Size) -> Position:
    """Rescale a pixel position between resolutions, independently per axis."""
    fw, fh = from_size
    tw, th = to_size
    if fw <= 0 or fh <= 0:
        raise ValueError(f"source size must be positive, got {from_size}")
    x, y = position
    return (x * tw / fw, y * th / fh)
