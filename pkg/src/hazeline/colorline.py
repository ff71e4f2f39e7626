"""Per-patch color lines found by a Bayesian hypothesize-and-verify loop.

Pixels of a small patch that share one surface color form a line in RGB
space: shading moves them along the surface color's direction, and haze
offsets the whole line toward the airlight.  Each candidate line is a
pixel pair; every patch pixel is then classified inlier/outlier by a
naive Bayes rule whose per-feature likelihoods are zero-mean Gaussian
densities of the pixel's orthogonal residual components.  The candidate
with the greatest total inlier posterior wins, followed by a principal
axis polish on its consensus set that is kept only when it scores at
least as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import PatchRef, as_image

# Reasons a fit or validation can fail; the pipeline tallies these.
FAIL_DEGENERATE = "degenerate patch"
FAIL_SUPPORT = "insufficient support"
FAIL_SLOPE = "positive slope"
FAIL_UNIMODAL = "unimodality"
FAIL_TOO_SMALL = "patch too small"

MIN_PATCH_PIXELS = 8


@dataclass(frozen=True)
class ClassifierParams:
    """Knobs of the inlier/outlier classifier and the fit loop."""

    inlier_sigma: float = 0.02
    min_inlier_fraction: float = 0.4
    max_patch_growth: int = 15
    inlier_prior: float = 0.5
    hypotheses: int = 64
    use_spatial_features: bool = False
    feature_spatial_weight: float = 0.1

    def __post_init__(self):
        if self.inlier_sigma <= 0.0:
            raise ValueError("inlier_sigma must be positive")
        if not 0.2 < self.min_inlier_fraction < 0.9:
            raise ValueError("min_inlier_fraction must lie in (0.2, 0.9)")
        if self.max_patch_growth < 1:
            raise ValueError("max_patch_growth must be positive")
        if not 0.0 <= self.inlier_prior <= 1.0:
            raise ValueError("inlier_prior must lie in [0, 1]")
        if self.hypotheses < 1:
            raise ValueError("hypotheses must be positive")


@dataclass
class ColorLine:
    """A fitted line P = p0 + rho * direction with its consensus set.

    ``normal`` spans, with the line itself, the plane through the origin
    containing the line; it is None when the line (nearly) passes
    through the origin and that plane is ill defined.
    """

    p0: np.ndarray
    direction: np.ndarray
    normal: np.ndarray | None
    inliers: np.ndarray  # (k, 2) int (x, y) coordinates
    support: int


@dataclass(frozen=True)
class PatchStats:
    """Per-patch context the validation checks need."""

    pixel_count: int
    projections: np.ndarray  # inlier projections onto the line direction


def naive_bayes_posterior(prior_inlier: float, inlier_likelihoods, outlier_likelihoods) -> np.ndarray:
    """Posterior of the inlier class under per-feature independence.

    Arguments are (n, k) likelihood tables, one column per feature; the
    joint likelihood of each class is the row product, and posteriors
    are normalized so the two classes sum to one per sample.  Samples
    where both joints vanish are uninformative and get 0.5.
    """
    lin = np.asarray(inlier_likelihoods, dtype=np.float64)
    lout = np.asarray(outlier_likelihoods, dtype=np.float64)
    if lin.shape != lout.shape or lin.ndim != 2:
        raise ValueError("likelihood tables must share one (n, k) shape")
    joint_in = prior_inlier * lin.prod(axis=1)
    joint_out = (1.0 - prior_inlier) * lout.prod(axis=1)
    total = joint_in + joint_out
    out = np.full(lin.shape[0], 0.5)
    ok = total > 0.0
    out[ok] = joint_in[ok] / total[ok]
    return out


def classify_patch_pixels(features, p0, direction, params: ClassifierParams) -> np.ndarray:
    """Inlier posterior of each patch pixel against a candidate line.

    ``features`` is an (n, 5) array of (R, G, B, wx, wy) vectors; only
    the color columns enter unless use_spatial_features is set, in which
    case the two centered spatial components join the feature set.  Each
    feature's inlier likelihood is a Gaussian density of the orthogonal
    residual component, width inlier_sigma; the outlier likelihood is
    uniform density one on the unit cube.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != 5:
        raise ValueError("features must be an (n, 5) array")
    if f.shape[0] == 0:
        raise ValueError("no pixels to classify")
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(d)
    if norm <= 0.0:
        raise ValueError("direction must be non-zero")
    d = d / norm
    delta = f[:, :3] - np.asarray(p0, dtype=np.float64).reshape(3)
    resid = delta - np.outer(delta @ d, d)
    columns = [resid]
    if params.use_spatial_features:
        spatial = f[:, 3:]
        columns.append(spatial - spatial.mean(axis=0))
    values = np.hstack(columns)
    scale = 1.0 / (params.inlier_sigma * np.sqrt(2.0 * np.pi))
    lin = scale * np.exp(-0.5 * (values / params.inlier_sigma) ** 2)
    lout = np.ones_like(lin)
    return naive_bayes_posterior(params.inlier_prior, lin, lout)


def derive_patch_seed(cx: int, cy: int, base_seed: int) -> int:
    """Stable per-patch RNG seed from the patch center coordinates."""
    return (cx * 73856093 ^ cy * 19349663 ^ base_seed * 83492791) & 0x7FFFFFFF


def _canonical_direction(d: np.ndarray) -> np.ndarray:
    s = d.sum()
    if s < 0.0:
        return -d
    if s == 0.0:
        nz = np.flatnonzero(d)
        if len(nz) and d[nz[0]] < 0.0:
            return -d
    return d


def _patch_features(pixels: np.ndarray, coords: np.ndarray, shape, params: ClassifierParams) -> np.ndarray:
    h, w = shape
    f = np.empty((len(pixels), 5))
    f[:, :3] = pixels
    f[:, 3] = params.feature_spatial_weight * coords[:, 0] / w
    f[:, 4] = params.feature_spatial_weight * coords[:, 1] / h
    return f


def fit_color_line(patch: PatchRef, img, params: ClassifierParams, rng_seed: int):
    """Fit one color line to a patch.

    Returns (ColorLine, None) on success or (None, reason) on failure.
    The hypothesis pairs are drawn from a generator seeded with
    ``rng_seed``, so the fit is a pure function of its arguments.
    """
    img = as_image(img)
    pixels = patch.pixels(img)
    coords = patch.coords()
    n = len(pixels)
    if n < MIN_PATCH_PIXELS:
        raise ValueError(f"patch has {n} pixels, need at least {MIN_PATCH_PIXELS}")
    if pixels.std(axis=0).max() < 1e-9:
        return None, FAIL_DEGENERATE

    features = _patch_features(pixels, coords, img.shape[:2], params)
    rng = np.random.default_rng(rng_seed)
    best_score = -1.0
    best = None
    for _ in range(params.hypotheses):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        span = pixels[j] - pixels[i]
        length = np.linalg.norm(span)
        if length < 1e-6:
            continue
        direction = span / length
        post = classify_patch_pixels(features, pixels[i], direction, params)
        score = float(post.sum())
        if score > best_score:
            best_score = score
            best = (pixels[i], pixels[j], direction, post)
    if best is None:
        return None, FAIL_DEGENERATE

    p1, p2, direction, post = best
    # Principal-axis polish on the consensus set, kept only if it scores
    # at least as well as the winning pair.
    inlier_mask = post > 0.5
    if inlier_mask.sum() >= 2:
        cloud = pixels[inlier_mask]
        centered = cloud - cloud.mean(axis=0)
        if np.abs(centered).max() > 0.0:
            axis = np.linalg.svd(centered, full_matrices=False)[2][0]
            axis = _canonical_direction(axis)
            refined_post = classify_patch_pixels(features, cloud.mean(axis=0), axis, params)
            if float(refined_post.sum()) >= best_score:
                p1 = cloud.mean(axis=0)
                p2 = p1 + axis
                direction = axis
                post = refined_post
                inlier_mask = post > 0.5

    support = int(inlier_mask.sum())
    if support < params.min_inlier_fraction * n:
        return None, FAIL_SUPPORT

    cross = np.cross(p2, p1)
    cross_norm = np.linalg.norm(cross)
    # The plane through the origin degenerates when the line runs through
    # the origin itself, the haze-free case; such lines carry no airlight
    # direction information.
    reference = max(1.0, float(np.linalg.norm(p1) * np.linalg.norm(p2)))
    normal = cross / cross_norm if cross_norm > 1e-6 * reference else None
    line = ColorLine(
        p0=np.array(p1, dtype=np.float64),
        direction=np.array(direction, dtype=np.float64),
        normal=normal,
        inliers=coords[inlier_mask],
        support=support,
    )
    return line, None


def line_projections(line: ColorLine, img) -> np.ndarray:
    """Projections of the line's inlier pixels onto its direction."""
    img = as_image(img)
    rgb = img[line.inliers[:, 1], line.inliers[:, 0]]
    return (rgb - line.p0) @ line.direction


def patch_stats(line: ColorLine, patch: PatchRef, img) -> PatchStats:
    return PatchStats(pixel_count=patch.pixel_count, projections=line_projections(line, img))


def _is_unimodal(counts: np.ndarray) -> bool:
    # collapse equal-valued runs, then count peaks; ends may be peaks
    vals = [counts[0]]
    for c in counts[1:]:
        if c != vals[-1]:
            vals.append(c)
    peaks = 0
    for k, v in enumerate(vals):
        left_ok = k == 0 or v > vals[k - 1]
        right_ok = k == len(vals) - 1 or v > vals[k + 1]
        if left_ok and right_ok:
            peaks += 1
    return peaks <= 1


def validate_color_line(line: ColorLine, stats: PatchStats, params: ClassifierParams):
    """Run the acceptance checks on a fitted line, in a fixed order.

    Returns None when the line passes, otherwise the first failing
    reason: support, then slope sign, then unimodality.  The slope check
    first flips the direction to its non-negative orientation when that
    exists (only the line, not the ray, is determined), so a line fails
    it exactly when its direction mixes signs either way.
    """
    if line.support < params.min_inlier_fraction * stats.pixel_count:
        return FAIL_SUPPORT

    d = line.direction
    tol = 1e-9
    if (d <= tol).all():
        line.direction = -d
    elif not (d >= -tol).all():
        return FAIL_SLOPE

    if len(stats.projections) >= 2:
        counts, _ = np.histogram(stats.projections, bins=10)
        if not _is_unimodal(counts):
            return FAIL_UNIMODAL
    return None


def fit_and_validate(patch: PatchRef, img, params: ClassifierParams, base_seed: int = 0):
    """Fit plus validation in one step; used by the pipeline and growth."""
    if patch.pixel_count < MIN_PATCH_PIXELS:
        return None, FAIL_TOO_SMALL
    seed = derive_patch_seed(patch.cx, patch.cy, base_seed)
    line, reason = fit_color_line(patch, img, params, seed)
    if line is None:
        return None, reason
    stats = patch_stats(line, patch, img)
    reason = validate_color_line(line, stats, params)
    if reason is not None:
        return None, reason
    return line, None


def grow_patch_and_refit(patch: PatchRef, img, params: ClassifierParams, base_seed: int = 0):
    """Retry a failed patch at growing sizes: half size h -> 2h + 1.

    The ladder stops at max_patch_growth (a half-size cap) and grown
    patches are clipped to the image.  Returns the first fit that also
    validates, or (None, reason) carrying the last failure.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    reason = FAIL_DEGENERATE
    half = patch.half
    while half < params.max_patch_growth:
        half = min(2 * half + 1, params.max_patch_growth)
        grown = PatchRef.centered(patch.cx, patch.cy, half, w, h)
        line, reason = fit_and_validate(grown, img, params, base_seed)
        if line is not None:
            return line, None
    return None, reason
