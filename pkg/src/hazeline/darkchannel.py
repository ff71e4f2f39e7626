"""Dark channel, the transmission estimate built on it, and anchor picking.

The dark channel of a patch is the minimum intensity over both channels
and a square window around each pixel.  Outdoor haze-free images have a
dark channel near zero, so the residual brightness of a hazy image's
dark channel measures the airlight contribution and hence transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import as_image, as_scalar_map


@dataclass(frozen=True)
class DcpParams:
    """Window size and the divide-by-airlight guard."""

    patch_size: int = 15
    airlight_floor: float = 1.0 / 255.0

    def __post_init__(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd and >= 3")
        if not 0.0 < self.airlight_floor <= 0.1:
            raise ValueError("airlight_floor must lie in (0, 0.1]")


def dark_channel(img: np.ndarray, patch_size: int) -> np.ndarray:
    """Windowed minimum over channels and a patch_size square window.

    The window is clipped at the image border rather than padded, which
    a two-pass separable minimum with edge replication reproduces
    exactly: replicated values already belong to the clipped window.
    """
    img = as_image(img)
    if patch_size < 3 or patch_size % 2 == 0:
        raise ValueError("patch_size must be odd and >= 3")
    per_pixel = img.min(axis=2)
    rows = ndimage.minimum_filter1d(per_pixel, patch_size, axis=1, mode="nearest")
    return ndimage.minimum_filter1d(rows, patch_size, axis=0, mode="nearest")


def estimate_transmission_dcp(img: np.ndarray, airlight: np.ndarray, params: DcpParams) -> np.ndarray:
    """Transmission as one minus the dark channel of img / airlight.

    Each channel is divided by the corresponding airlight component
    (clamped below by airlight_floor) before the windowed minimum; the
    result is clamped to [0, 1].
    """
    img = as_image(img)
    a = np.asarray(airlight, dtype=np.float64).reshape(3)
    a = np.maximum(a, params.airlight_floor)
    ratio = img / a
    per_pixel = ratio.min(axis=2)
    rows = ndimage.minimum_filter1d(per_pixel, params.patch_size, axis=1, mode="nearest")
    dark = ndimage.minimum_filter1d(rows, params.patch_size, axis=0, mode="nearest")
    return np.clip(1.0 - dark, 0.0, 1.0)


def bootstrap_airlight(img: np.ndarray, params: DcpParams, top_fraction: float = 0.3) -> np.ndarray:
    """Whole-image airlight color from the haziest pixels.

    The pixels with the brightest dark channel are the most
    haze-dominated, so their mean color points along the airlight.  The
    band is deliberately wide: surface colors average out of the
    direction only when the selection spans many distinct surfaces, and
    residual scene radiance tilts the mean far less than it shortens it.
    The shortening is what rules the mean out as a scale estimate, its
    bias being roughly t*(A - J); the scale is instead the largest
    projection of any selected pixel onto the direction, which the
    band width barely moves because the haziest pixels stay included.
    """
    img = as_image(img)
    dark = dark_channel(img, params.patch_size)
    flat = dark.ravel()
    k = max(1, int(round(top_fraction * flat.size)))
    threshold = np.partition(flat, flat.size - k)[flat.size - k]
    # everything tied at the threshold joins the set, so the selection
    # cannot depend on traversal order and a flat haze layer contributes
    # all of its pixels instead of an arbitrary corner
    idx = np.flatnonzero(flat >= threshold)
    colors = img.reshape(-1, 3)[idx]
    mean = colors.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm <= 0.0:
        return np.full(3, params.airlight_floor)
    direction = mean / norm
    scale = float((colors @ direction).max())
    return np.clip(scale * direction, params.airlight_floor, 1.0)


def max_filter_anchor_points(t_raw: np.ndarray, window: int, top_fraction: float):
    """Anchor pixels: local maxima of the raw transmission map.

    A pixel qualifies when it equals the maximum of its clipped window;
    runs of equal qualifying pixels (plateaus, which windowed-minimum
    maps produce in quantity) collapse to their first row-major pixel,
    so an isolated strict maximum is returned as itself.  Candidates are
    ranked by value and the top ``top_fraction`` of them kept, never
    fewer than one.  A constant map has no local structure at all and
    falls back to the single center pixel.

    Returns a list of ((x, y), value) pairs, best first.
    """
    t = as_scalar_map(t_raw)
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError("top_fraction must lie in (0, 1]")
    h, w = t.shape
    if t.max() - t.min() <= 0.0:
        return [((w // 2, h // 2), float(t[h // 2, w // 2]))]

    peaks = t >= ndimage.maximum_filter(t, size=window, mode="nearest")
    labels, count = ndimage.label(peaks, structure=np.ones((3, 3), dtype=int))
    # Adjacent qualifying pixels share one window, hence one value, so
    # each component is a constant plateau; keep its first pixel.
    first = ndimage.minimum(np.arange(t.size).reshape(t.shape), labels, range(1, count + 1))
    candidates = []
    for flat in np.asarray(first, dtype=int):
        y, x = divmod(flat, w)
        candidates.append(((x, y), float(t[y, x])))
    candidates.sort(key=lambda c: (-c[1], c[0][1], c[0][0]))
    keep = max(1, math.ceil(top_fraction * len(candidates)))
    return candidates[:keep]
