"""Image and document serialization.

Images travel as 8-bit PNG or binary PPM; scalar maps (transmission,
depth, interpolated airlight) as 16-bit grayscale PNG so their
quantization error stays below 1e-4.  All writes go to a temporary
file in the destination directory followed by an atomic rename, so a
failed run never leaves a partial output behind.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .image import as_image, as_scalar_map

MAP_SCALE = 65535


def _atomic_write(path, writer):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG or PPM into a [0, 1] float image."""
    with Image.open(path) as handle:
        rgb = handle.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return as_image(arr)


def save_image(path, img):
    """Write a [0, 1] image as 8-bit PNG or PPM, chosen by suffix."""
    img = as_image(img)
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        fmt = "PNG"
    elif suffix in (".ppm", ".pnm"):
        fmt = "PPM"
    else:
        raise ValueError(f"unsupported image suffix: {suffix or '(none)'}")
    _atomic_write(path, lambda tmp: Image.fromarray(data, mode="RGB").save(tmp, format=fmt))


def save_scalar_map(path, values):
    """Write a [0, 1] scalar map as 16-bit grayscale PNG."""
    m = as_scalar_map(values)
    if m.min() < 0.0 or m.max() > 1.0:
        raise ValueError("scalar map values must lie in [0, 1]")
    if Path(path).suffix.lower() != ".png":
        raise ValueError("scalar maps are stored as .png")
    data = np.round(m * MAP_SCALE).astype(np.uint16)
    # uint16 input selects Pillow's 16-bit grayscale mode on its own
    _atomic_write(path, lambda tmp: Image.fromarray(data).save(tmp, format="PNG"))


def load_scalar_map(path) -> np.ndarray:
    """Read a 16-bit grayscale PNG back into a [0, 1] scalar map."""
    with Image.open(path) as handle:
        arr = np.asarray(handle, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a grayscale map, got shape {arr.shape}")
    return arr / MAP_SCALE


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(format_value(v) for v in value)
    return str(value)


def write_keyvalues(path, mapping):
    """Write a flat mapping as 'key: value' lines, atomically."""
    lines = [f"{key}: {format_value(value)}\n" for key, value in mapping.items()]

    def writer(tmp):
        with open(tmp, "w", encoding="utf-8") as handle:
            handle.writelines(lines)

    _atomic_write(path, writer)


def read_keyvalues(path) -> dict:
    """Parse 'key: value' lines; blank lines and # comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if ":" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key: value'")
            key, _, value = stripped.partition(":")
            out[key.strip()] = value.strip()
    return out
