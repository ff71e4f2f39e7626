"""Image quality metrics and the report they roll up into."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .image import as_image, as_scalar_map, luma

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _check_pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    """Mean squared error over all pixels and channels."""
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100.

    The error is always measured on the [0, 1] arrays; ``peak`` only
    rescales the reference level, so peak=255 reproduces the value an
    8-bit pipeline reports when it divides 255^2 by a [0, 1] MSE.
    """
    err = mse(a, b)
    if err <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / err))


def ssim(a, b) -> float:
    """Mean structural similarity of the luma planes.

    Args:
        a, b: images of identical shape, at least 11 pixels per side.

    Returns:
        Mean SSIM over all fully interior 11x11 Gaussian windows
        (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2 on the [0, 1] range).
    """
    a, b = _check_pair(a, b)
    h, w = a.shape[:2]
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels per side")
    x, y = luma(a), luma(b)
    radius = SSIM_WINDOW // 2
    # truncate chosen so the kernel is exactly 11 taps wide
    truncate = radius / SSIM_SIGMA

    def blur(m):
        return ndimage.gaussian_filter(m, SSIM_SIGMA, truncate=truncate)

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x ** 2
    var_y = blur(y * y) - mu_y ** 2
    cov = blur(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    smap = num / den
    interior = smap[radius:h - radius, radius:w - radius]
    return float(interior.mean())


def wsnr(a, b, peak: float = 1.0) -> float:
    """Contrast-weighted PSNR in dB, capped at 100.

    The squared error of each pixel is weighted by the local contrast
    of the reference ``b``: the gradient magnitude of its luma plane
    (central differences, one-sided at the border), normalized to mean
    one so the weighted MSE stays on the PSNR scale.  A reference with
    spatially constant gradient magnitude therefore reproduces psnr()
    exactly; so does a flat reference, where the weights degenerate to
    ones.
    """
    a, b = _check_pair(a, b)
    gy, gx = np.gradient(luma(b))
    g = np.hypot(gx, gy)
    mean_g = g.mean()
    weights = g / mean_g if mean_g > 0.0 else np.ones_like(g)
    werr = float(np.mean(weights[:, :, None] * (a - b) ** 2))
    if werr <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / werr))


def l1_transmission_error(t_est, t_true, mask=None) -> float:
    """Mean absolute transmission error, optionally restricted to a mask."""
    t_est = as_scalar_map(t_est)
    t_true = as_scalar_map(t_true, shape=t_est.shape)
    if mask is None:
        return float(np.abs(t_est - t_true).mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != t_est.shape:
        raise ValueError("mask shape does not match transmission maps")
    if not mask.any():
        raise ValueError("mask excludes every pixel")
    return float(np.abs(t_est - t_true)[mask].mean())


def sky_mask(t_true, threshold: float = 0.05) -> np.ndarray:
    """Boolean mask of non-sky pixels: true transmission >= threshold."""
    return as_scalar_map(t_true) >= threshold


@dataclass
class QualityReport:
    """Metric values for one result/reference pair."""

    mse: float
    psnr: float
    ssim: float
    wsnr: float
    t_l1: float | None = None
    mask_coverage: float | None = None
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "mse": self.mse,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "wsnr": self.wsnr,
        }
        if self.t_l1 is not None:
            out["t_l1"] = self.t_l1
        if self.mask_coverage is not None:
            out["mask_coverage"] = self.mask_coverage
        out.update(self.extras)
        return out


def compare(result, reference, t_est=None, t_true=None, mask=None, peak: float = 1.0) -> QualityReport:
    """Full metric comparison of a dehazed result against its reference."""
    report = QualityReport(
        mse=mse(result, reference),
        psnr=psnr(result, reference, peak=peak),
        ssim=ssim(result, reference),
        wsnr=wsnr(result, reference, peak=peak),
    )
    if t_est is not None:
        if t_true is None:
            raise ValueError("t_true is required when t_est is given")
        report.t_l1 = l1_transmission_error(t_est, t_true, mask)
        if mask is not None:
            m = np.asarray(mask, dtype=bool)
            report.mask_coverage = float(m.mean())
    return report
