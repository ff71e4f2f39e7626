"""Raster conventions shared by every stage.

An image is a float64 array of shape (H, W, 3) with values in [0, 1];
a scalar map is a float64 array of shape (H, W).  Pixel coordinates are
(x, y) with x indexing columns and y indexing rows, so ``img[y, x]`` is
the pixel at (x, y).  This module validates those conventions, slices
patches, and builds the 5-D similarity features (R, G, B, wx, wy) used
by the nearest-neighbor stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Rec. 601 luma weights; they sum to 0.9999, not 1.
LUMA_WEIGHTS = np.array([0.2989, 0.5870, 0.1140])


def as_image(arr) -> np.ndarray:
    """Validate and return a float64 (H, W, 3) image in [0, 1]."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def as_scalar_map(arr, shape=None) -> np.ndarray:
    """Validate and return a float64 (H, W) scalar map."""
    m = np.asarray(arr, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected (H, W) scalar map, got shape {m.shape}")
    if shape is not None and m.shape != tuple(shape):
        raise ValueError(f"scalar map shape {m.shape} does not match {shape}")
    return m


def luma(pixels) -> np.ndarray:
    """Rec. 601 luma of RGB values; works on any (..., 3) array."""
    p = np.asarray(pixels, dtype=np.float64)
    if p.shape[-1] != 3:
        raise ValueError("luma expects RGB values along the last axis")
    return p @ LUMA_WEIGHTS


def to_feature_vector(img: np.ndarray, x: int, y: int, spatial_weight: float) -> np.ndarray:
    """5-D feature (R, G, B, w*x/W, w*y/H) of the pixel at (x, y).

    Coordinates are normalized by the image dimensions before weighting,
    so the two spatial components lie in [0, spatial_weight).  A weight
    of zero degenerates to a pure color feature.
    """
    if spatial_weight < 0.0:
        raise ValueError("spatial_weight must be non-negative")
    h, w = img.shape[:2]
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"pixel ({x}, {y}) outside {w}x{h} image")
    out = np.empty(5)
    out[:3] = img[y, x]
    out[3] = spatial_weight * x / w
    out[4] = spatial_weight * y / h
    return out


def feature_grid(img: np.ndarray, spatial_weight: float) -> np.ndarray:
    """Feature vectors of every pixel, row-major, as an (H*W, 5) array."""
    if spatial_weight < 0.0:
        raise ValueError("spatial_weight must be non-negative")
    h, w = img.shape[:2]
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    out = np.empty((h * w, 5))
    out[:, :3] = img.reshape(-1, 3)
    out[:, 3] = spatial_weight * xs.ravel() / w
    out[:, 4] = spatial_weight * ys.ravel() / h
    return out


@dataclass(frozen=True)
class PatchRef:
    """A square patch clipped to the image: center, half size, and the
    clipped bounds [x0, x1) x [y0, y1)."""

    cx: int
    cy: int
    half: int
    x0: int
    y0: int
    x1: int
    y1: int

    @staticmethod
    def centered(cx: int, cy: int, half: int, width: int, height: int) -> "PatchRef":
        if half < 0:
            raise ValueError("half size must be non-negative")
        if not (0 <= cx < width and 0 <= cy < height):
            raise ValueError(f"patch center ({cx}, {cy}) outside {width}x{height} image")
        return PatchRef(
            cx, cy, half,
            max(0, cx - half), max(0, cy - half),
            min(width, cx + half + 1), min(height, cy + half + 1),
        )

    @property
    def pixel_count(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def pixels(self, img: np.ndarray) -> np.ndarray:
        """Patch pixels as an (n, 3) array, row-major within the bounds."""
        return img[self.y0:self.y1, self.x0:self.x1].reshape(-1, 3)

    def coords(self) -> np.ndarray:
        """(n, 2) array of (x, y) coordinates matching ``pixels`` order."""
        xs, ys = np.meshgrid(np.arange(self.x0, self.x1), np.arange(self.y0, self.y1))
        return np.stack([xs.ravel(), ys.ravel()], axis=1)


def iterate_patches(shape, size: int, stride: int):
    """Yield PatchRefs tiling an image of the given (H, W) shape.

    Top-left corners advance row-major by ``stride``; patches at the
    right and bottom edges are clipped.  Every pixel is covered at least
    once whenever stride <= size.
    """
    if size < 1 or stride < 1:
        raise ValueError("size and stride must be positive")
    h, w = shape[0], shape[1]
    half = size // 2
    for y0 in range(0, h, stride):
        for x0 in range(0, w, stride):
            x1, y1 = min(x0 + size, w), min(y0 + size, h)
            cx, cy = min(x0 + half, w - 1), min(y0 + half, h - 1)
            yield PatchRef(cx, cy, half, x0, y0, x1, y1)
