"""Radiance recovery: invert the scattering model or subtract airlight.

Two routes produce the final image.  The transmission route divides out
the estimated transmission map directly.  The airlight route subtracts
the spatially varying airlight contribution, then restores contrast by
the luma fraction that subtraction removed.  Both end with an optional
gamma lift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import as_image, as_scalar_map, luma

MODE_TRANSMISSION = "trans"
MODE_AIRLIGHT = "airlight"

# Denominators below this are treated as saturated airlight.
SATURATION_EPS = 1e-6


@dataclass(frozen=True)
class RecoveryParams:
    t_floor: float = 0.1
    gamma: float = 1.5
    mode: str = MODE_AIRLIGHT

    def __post_init__(self):
        if not 0.05 <= self.t_floor <= 0.2:
            raise ValueError("t_floor must lie in [0.05, 0.2]")
        if not 0.3 <= self.gamma <= 3.0:
            raise ValueError("gamma must lie in [0.3, 3.0]")
        if self.mode not in (MODE_TRANSMISSION, MODE_AIRLIGHT):
            raise ValueError(f"unknown recovery mode: {self.mode}")


def recover_radiance(img, transmission, airlight, params: RecoveryParams) -> np.ndarray:
    """J = (I - A) / max(t, t_floor) + A, clamped to [0, 1].

    The floor keeps the division stable where transmission vanishes; at
    those pixels the output degrades toward the airlight color instead
    of exploding.
    """
    img = as_image(img)
    t = as_scalar_map(transmission, shape=img.shape[:2])
    a = np.asarray(airlight, dtype=np.float64).reshape(3)
    denom = np.maximum(t, params.t_floor)[:, :, None]
    return np.clip((img - a) / denom + a, 0.0, 1.0)


def direct_transmission_component(img, magnitudes, direction) -> np.ndarray:
    """The directly transmitted light I - a(x) * A_hat, negatives clamped."""
    img = as_image(img)
    a = as_scalar_map(magnitudes, shape=img.shape[:2])
    if a.min() < 0.0:
        raise ValueError("airlight magnitudes must be non-negative")
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    component = img - a[:, :, None] * d
    return np.maximum(component, 0.0)


def contrast_restore(transmitted, magnitudes, direction):
    """Divide by one minus the luma the airlight subtraction removed.

    Returns (restored image, saturated mask); the mask marks pixels
    whose denominator fell below SATURATION_EPS and was clamped there,
    meaning the airlight accounted for essentially all their light.
    """
    jt = as_image(transmitted)
    a = as_scalar_map(magnitudes, shape=jt.shape[:2])
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    removed = a * luma(d)
    denom = 1.0 - removed
    saturated = denom < SATURATION_EPS
    denom = np.maximum(denom, SATURATION_EPS)
    restored = np.clip(jt / denom[:, :, None], 0.0, 1.0)
    return restored, saturated


def gamma_correct(img, gamma: float) -> np.ndarray:
    """out = in ** (1 / gamma) on [0, 1]; gamma 1 is the identity."""
    img = as_image(img)
    if not 0.3 <= gamma <= 3.0:
        raise ValueError("gamma must lie in [0.3, 3.0]")
    if gamma == 1.0:
        return img.copy()
    return np.clip(img, 0.0, 1.0) ** (1.0 / gamma)
