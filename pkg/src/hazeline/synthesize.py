"""Synthetic hazy scenes with known ground truth.

A scene bundles a clean radiance image, a depth map, a scattering
coefficient, an airlight color, and a noise level.  Haze is composed
with the scattering model I = t*J + (1 - t)*A where t = exp(-beta*d),
then per-channel Gaussian noise is added from a counter-based generator
so the output never depends on how the work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .image import as_image, as_scalar_map


@dataclass
class SceneSpec:
    """Ground truth inputs for one synthetic hazy image."""

    radiance: np.ndarray
    depth: np.ndarray
    beta: float
    airlight: np.ndarray
    noise_sigma: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        self.radiance = as_image(self.radiance)
        self.depth = as_scalar_map(self.depth, shape=self.radiance.shape[:2])
        if self.depth.min() < 0.0:
            raise ValueError("depth values must be non-negative")
        if self.beta < 0.0:
            raise ValueError("beta must be non-negative")
        self.airlight = np.asarray(self.airlight, dtype=np.float64).reshape(3)
        if self.airlight.min() < 0.0 or self.airlight.max() > 1.0:
            raise ValueError("airlight components must lie in [0, 1]")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def transmission(self) -> np.ndarray:
        return transmission_from_depth(self.depth, self.beta)


def transmission_from_depth(depth, beta: float) -> np.ndarray:
    """t = exp(-beta * d); identically one when beta is zero."""
    depth = as_scalar_map(depth)
    if depth.min() < 0.0:
        raise ValueError("depth values must be non-negative")
    if beta < 0.0:
        raise ValueError("beta must be non-negative")
    return np.exp(-beta * depth)


def add_gaussian_noise(img, sigma: float, seed: int) -> np.ndarray:
    """Per-channel Gaussian noise from a Philox stream, clipped to [0, 1].

    Philox is counter-based: the stream is a pure function of the seed,
    so the same scene renders identically regardless of thread count.
    """
    img = as_image(img)
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return img.copy()
    rng = np.random.Generator(np.random.Philox(seed))
    return np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0)


def synthesize_haze(scene: SceneSpec) -> np.ndarray:
    """Render the hazy observation of a scene, noise included."""
    t = scene.transmission[:, :, None]
    hazy = t * scene.radiance + (1.0 - t) * scene.airlight
    hazy = np.clip(hazy, 0.0, 1.0)
    return add_gaussian_noise(hazy, scene.noise_sigma, scene.noise_seed)


def block_radiance(width: int, height: int, seed: int, block_size: int = 8,
                   dark_limit: float = 0.02, shading_low: float = 0.45) -> np.ndarray:
    """Colored blocks with per-pixel shading, a radiance the dark channel
    prior holds for: every block color has one channel at or below
    ``dark_limit``, and the diagonal shading ramp gives each block the
    one-dimensional color variation the line fits look for.  The shading
    is a pure function of the in-block position, so block-interior
    pixels lie exactly on a line through the origin of color space.  The
    shading minimum sits at the block center, which puts each block's
    dark channel minimum well away from its neighbours; with a nonzero
    ``dark_limit`` that gives the hazy image's dark channel one local
    extremum per block for the anchor extraction to find, whatever the
    depths of the surrounding blocks."""
    if width < 1 or height < 1 or block_size < 1:
        raise ValueError("dimensions and block_size must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    bw = -(-width // block_size)
    bh = -(-height // block_size)
    colors = rng.uniform(0.15, 1.0, size=(bh, bw, 3))
    dark_channel_pick = rng.integers(0, 3, size=(bh, bw))
    dark_values = rng.uniform(0.0, dark_limit, size=(bh, bw))
    for c in range(3):
        sel = dark_channel_pick == c
        colors[:, :, c][sel] = dark_values[sel]
    base = np.repeat(np.repeat(colors, block_size, axis=0), block_size, axis=1)
    base = base[:height, :width]
    yy, xx = np.mgrid[0:height, 0:width]
    center = (block_size - 1) / 2.0
    cone = np.abs((xx % block_size) - center) + np.abs((yy % block_size) - center)
    phase = cone / max(1.0, 2.0 * center)
    shading = shading_low + (1.0 - shading_low) * phase
    return np.clip(base * shading[:, :, None], 0.0, 1.0)


def two_plane_depth(width: int, height: int, near: float, far: float,
                    split: float = 0.5, axis: str = "x") -> np.ndarray:
    """Step depth map: ``near`` on the low side of the split, ``far`` beyond."""
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")
    depth = np.full((height, width), float(near))
    if axis == "x":
        depth[:, int(round(split * width)):] = far
    elif axis == "y":
        depth[int(round(split * height)):, :] = far
    else:
        raise ValueError("axis must be 'x' or 'y'")
    return depth


def gradient_depth(width: int, height: int, near: float, far: float,
                   relief: float = 0.0, block_size: int = 16,
                   seed: int = 0) -> np.ndarray:
    """Depth ramp from near at the left edge to far at the right edge.

    With ``relief`` zero this is a smooth per-pixel ramp.  A nonzero
    ``relief`` switches to flat blocks standing on the slope: each block
    takes the ramp depth at its own center plus a per-block offset of up
    to relief/2 times the ramp span either way.  A smooth ramp is
    monotone, which leaves the transmission map without interior local
    maxima and so starves the anchor extraction; the flat blocks
    restore them while depth still trends near to far across the image.
    """
    if relief < 0.0:
        raise ValueError("relief must be non-negative")
    if relief == 0.0:
        ramp = np.linspace(near, far, width)
        return np.tile(ramp, (height, 1))
    rng = np.random.Generator(np.random.Philox(seed))
    bw = -(-width // block_size)
    bh = -(-height // block_size)
    span = far - near
    centers = (np.arange(bw) + 0.5) * block_size
    base = near + span * np.minimum(centers / max(1, width - 1), 1.0)
    offsets = (rng.uniform(size=(bh, bw)) - 0.5) * relief * span
    blocks = base[None, :] + offsets
    depth = np.repeat(np.repeat(blocks, block_size, axis=0), block_size, axis=1)
    return np.maximum(depth[:height, :width], 0.0)


def sky_depth(width: int, height: int, near: float, sky: float,
              sky_fraction: float = 0.35) -> np.ndarray:
    """Near ground plane with a deep sky band across the top rows."""
    if not 0.0 < sky_fraction < 1.0:
        raise ValueError("sky_fraction must lie in (0, 1)")
    depth = np.full((height, width), float(near))
    depth[: int(round(sky_fraction * height)), :] = sky
    return depth


_SPEC_DEFAULTS = {
    "width": "128", "height": "128",
    "radiance": "blocks", "radiance_seed": "0", "block_size": "8",
    "depth": "two_plane", "near": "0.5", "far": "2.0",
    "depth_relief": "0.0", "depth_seed": "0",
    "split": "0.5", "split_axis": "x", "sky": "6.0", "sky_fraction": "0.35",
    "beta": "1.0", "airlight": "0.8 0.8 0.8",
    "sigma": "0.0", "seed": "0",
}


def resolve_scene_values(values: dict) -> dict:
    """Merge scene values onto the defaults, rejecting unknown keys so a
    typo cannot silently fall back to a default."""
    unknown = set(values) - set(_SPEC_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown scene keys: {', '.join(sorted(unknown))}")
    return dict(_SPEC_DEFAULTS, **{k: str(v) for k, v in values.items()})


def scene_from_spec(values: dict) -> SceneSpec:
    """Build a SceneSpec from flat key/value strings (a parsed spec file).

    In a sky scene the sky band's radiance is set to the airlight color,
    which is what a camera at infinite depth records.
    """
    merged = resolve_scene_values(values)
    try:
        width, height = int(merged["width"]), int(merged["height"])
        seed = int(merged["seed"])
        radiance_seed = int(merged["radiance_seed"])
        block = int(merged["block_size"])
        beta = float(merged["beta"])
        sigma = float(merged["sigma"])
        airlight = np.array([float(v) for v in merged["airlight"].split()])
        near, far = float(merged["near"]), float(merged["far"])
    except ValueError as exc:
        raise ConfigError(f"bad scene value: {exc}") from exc
    if airlight.shape != (3,):
        raise ConfigError("airlight must be three components")
    if width < 1 or height < 1:
        raise ConfigError("scene dimensions must be positive")

    if merged["radiance"] == "blocks":
        radiance = block_radiance(width, height, radiance_seed, block)
    elif merged["radiance"] == "flat":
        radiance = np.full((height, width, 3), 0.5)
    else:
        raise ConfigError(f"unknown radiance generator: {merged['radiance']}")

    mode = merged["depth"]
    if mode == "two_plane":
        depth = two_plane_depth(width, height, near, far,
                                float(merged["split"]), merged["split_axis"])
    elif mode == "gradient":
        depth = gradient_depth(width, height, near, far,
                               relief=float(merged["depth_relief"]),
                               block_size=int(merged["block_size"]),
                               seed=int(merged["depth_seed"]))
    elif mode == "sky":
        fraction = float(merged["sky_fraction"])
        depth = sky_depth(width, height, near, float(merged["sky"]), fraction)
        radiance = radiance.copy()
        radiance[: int(round(fraction * height)), :] = airlight
    else:
        raise ConfigError(f"unknown depth generator: {mode}")

    try:
        return SceneSpec(radiance, depth, beta, airlight, sigma, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
