"""Airlight estimation from the fitted color lines.

A hazy patch line is the haze-free line shifted along the airlight
axis, so the plane it spans with the origin contains the airlight
direction; that plane's normal is therefore orthogonal to it.
Accumulating the normals' outer products and taking the axis of least
scatter recovers the direction.  Magnitudes then come per patch from
the closest approach between the patch line and the airlight axis, a
2x2 linear system, validated and refined under a declining total
residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .colorline import ColorLine, PatchStats
from .errors import NumericError

FAIL_ANGLE = "intersection angle"
FAIL_RESIDUAL = "close intersection"
FAIL_RANGE = "valid range"
FAIL_SHADING = "shading variability"

# Patch magnitudes with exact intersections still need a finite
# confidence, so their sigma is floored here.
SIGMA_FLOOR = 1e-4


@dataclass(frozen=True)
class AirlightParams:
    min_angle_deg: float = 15.0
    max_residual: float = 0.05
    magnitude_min: float = 0.0
    magnitude_max: float = 1.0
    min_shading_spread: float = 0.02
    weight_by_support: bool = True
    refine_iters: int = 5
    tie_tol: float = 1e-9

    def __post_init__(self):
        if not 0.0 <= self.min_angle_deg < 90.0:
            raise ValueError("min_angle_deg must lie in [0, 90)")
        if self.max_residual <= 0.0:
            raise ValueError("max_residual must be positive")
        if self.magnitude_max <= self.magnitude_min:
            raise ValueError("magnitude range is empty")
        if self.min_shading_spread < 0.0:
            raise ValueError("min_shading_spread must be non-negative")
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be non-negative")


def symmetric_eig3(m: np.ndarray):
    """Eigenvalues (ascending) and eigenvectors of a symmetric 3x3 matrix.

    Solves the characteristic cubic in closed trigonometric form, then
    extracts each eigenvector from the cross products of (M - lam*I)
    columns and polishes the eigenvalue with one Rayleigh quotient.
    Returns (eigenvalues (3,), eigenvectors (3, 3) as columns).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError("matrix must be 3x3")
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    q = m.trace() / 3.0
    if p1 == 0.0:
        evals = np.sort(m.diagonal())
        order = np.argsort(m.diagonal(), kind="stable")
        evecs = np.eye(3)[:, order]
        return evals, evecs
    p2 = ((m[0, 0] - q) ** 2 + (m[1, 1] - q) ** 2 + (m[2, 2] - q) ** 2) + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    b = (m - q * np.eye(3)) / p
    r = np.linalg.det(b) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    eig_hi = q + 2.0 * p * math.cos(phi)
    eig_lo = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    eig_mid = 3.0 * q - eig_hi - eig_lo
    evals = np.array([eig_lo, eig_mid, eig_hi])

    evecs = np.empty((3, 3))
    for k, lam in enumerate(evals):
        shifted = m - lam * np.eye(3)
        crosses = [
            np.cross(shifted[:, 0], shifted[:, 1]),
            np.cross(shifted[:, 0], shifted[:, 2]),
            np.cross(shifted[:, 1], shifted[:, 2]),
        ]
        norms = [np.linalg.norm(c) for c in crosses]
        pick = int(np.argmax(norms))
        if norms[pick] > 0.0:
            v = crosses[pick] / norms[pick]
        else:
            # repeated root: any unit vector orthogonal to the remaining
            # column span will do
            col = shifted[:, int(np.argmax(np.abs(shifted).sum(axis=0)))]
            v = np.cross(col, [1.0, 0.0, 0.0])
            if np.linalg.norm(v) == 0.0:
                v = np.cross(col, [0.0, 1.0, 0.0])
            n = np.linalg.norm(v)
            v = v / n if n > 0.0 else np.eye(3)[k]
        evecs[:, k] = v
        evals[k] = v @ m @ v
    order = np.argsort(evals, kind="stable")
    return evals[order], evecs[:, order]


def estimate_airlight_direction(normals, weights=None, tie_tol: float = 1e-9) -> np.ndarray:
    """Airlight direction: the least-scatter axis of the line normals.

    Accumulates the (optionally weighted) average of n n^T over the
    given unit normals and returns the eigenvector of the smallest
    eigenvalue, sign-fixed into the non-negative octant.  Raises
    NumericError("ill-conditioned airlight") when fewer than three
    normals are given or the two smallest eigenvalues are within
    ``tie_tol`` of each other, since the axis is then ambiguous.
    """
    n = np.asarray(normals, dtype=np.float64)
    if n.ndim != 2 or n.shape[1] != 3:
        raise ValueError("normals must be an (k, 3) array")
    if len(n) < 3:
        raise NumericError("ill-conditioned airlight: need at least 3 normals")
    if weights is None:
        w = np.ones(len(n))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(n),) or w.min() < 0.0 or w.sum() <= 0.0:
            raise ValueError("weights must be non-negative with positive sum")
    scatter = np.einsum("k,ki,kj->ij", w, n, n) / w.sum()
    evals, evecs = symmetric_eig3(scatter)
    if evals[1] - evals[0] <= tie_tol:
        raise NumericError("ill-conditioned airlight: smallest eigenvalues tied")
    v = evecs[:, 0]
    if v.sum() < 0.0:
        v = -v
    # eigenvector signs are arbitrary; tiny negatives are noise, large
    # ones mean the normals do not bound a physical airlight, and the
    # clamp projects back to the admissible octant
    v = np.maximum(v, 0.0)
    norm = np.linalg.norm(v)
    if norm <= 0.0:
        raise NumericError("ill-conditioned airlight: direction collapsed")
    return v / norm


def estimate_airlight_magnitude(line: ColorLine, direction) -> tuple[float, float, float]:
    """Closest approach between a patch line and the airlight axis.

    Minimizes ||p0 + rho*D - s*A|| over (rho, s) via the normal
    equations of the 2x2 system.  Returns (rho, s, residual) where the
    residual is the distance between the two closest points.  Raises
    NumericError("parallel lines") when the line is (nearly) parallel
    to the axis and the system degenerates.
    """
    a = np.asarray(direction, dtype=np.float64).reshape(3)
    a = a / np.linalg.norm(a)
    d = line.direction / np.linalg.norm(line.direction)
    c = float(d @ a)
    if 1.0 - c * c < 1e-9:
        raise NumericError("parallel lines")
    s = float((a @ line.p0 - c * (d @ line.p0)) / (1.0 - c * c))
    rho = c * s - float(d @ line.p0)
    residual = float(np.linalg.norm(line.p0 + rho * d - s * a))
    return rho, s, residual


def validate_airlight_magnitude(line: ColorLine, rho: float, s: float, residual: float,
                                stats: PatchStats, params: AirlightParams, direction):
    """Acceptance checks for one patch magnitude, first failure returned.

    Order: intersection angle between line and axis, closeness of the
    intersection, magnitude range, then shading variability (the spread
    of inlier projections along the line).  Returns None on pass.
    """
    a = np.asarray(direction, dtype=np.float64).reshape(3)
    cosine = abs(float(line.direction @ a)) / (np.linalg.norm(line.direction) * np.linalg.norm(a))
    angle = math.degrees(math.acos(min(1.0, cosine)))
    if angle < params.min_angle_deg:
        return FAIL_ANGLE
    if residual > params.max_residual:
        return FAIL_RESIDUAL
    if not params.magnitude_min <= s <= params.magnitude_max:
        return FAIL_RANGE
    spread = float(stats.projections.max() - stats.projections.min()) if len(stats.projections) else 0.0
    if spread < params.min_shading_spread:
        return FAIL_SHADING
    return None


@dataclass
class PatchMagnitude:
    """One accepted per-patch airlight magnitude."""

    patch_index: int
    rho: float
    s: float
    residual: float
    sigma: float


@dataclass
class RefineResult:
    direction: np.ndarray
    magnitudes: list
    trace: list
    rejections: dict = field(default_factory=dict)


def _estimate_all(lines, stats_list, direction, params: AirlightParams):
    accepted, rejections = [], {}
    for idx, (line, stats) in enumerate(zip(lines, stats_list)):
        try:
            rho, s, residual = estimate_airlight_magnitude(line, direction)
        except NumericError:
            rejections["parallel lines"] = rejections.get("parallel lines", 0) + 1
            continue
        reason = validate_airlight_magnitude(line, rho, s, residual, stats, params, direction)
        if reason is not None:
            rejections[reason] = rejections.get(reason, 0) + 1
            continue
        sigma = max(residual, SIGMA_FLOOR) / math.sqrt(max(1, line.support))
        accepted.append(PatchMagnitude(idx, rho, s, residual, sigma))
    total = sum(m.residual ** 2 for m in accepted)
    return accepted, rejections, total


def refine_airlight(lines, stats_list, direction, params: AirlightParams) -> RefineResult:
    """Alternate between magnitudes and direction, declining residuals.

    Starting from the given direction, estimate and validate all patch
    magnitudes, then re-estimate the direction from the accepted
    patches' normals and repeat.  An iterate is kept only when its
    total squared intersection residual does not exceed the previous
    one, so the recorded trace never increases.
    """
    direction = np.asarray(direction, dtype=np.float64).reshape(3)
    accepted, rejections, total = _estimate_all(lines, stats_list, direction, params)
    trace = [total]
    for _ in range(params.refine_iters):
        normals = [lines[m.patch_index].normal for m in accepted]
        weights = [lines[m.patch_index].support for m in accepted]
        pairs = [(n, w) for n, w in zip(normals, weights) if n is not None]
        if len(pairs) < 3:
            break
        try:
            candidate = estimate_airlight_direction(
                np.array([p[0] for p in pairs]),
                np.array([float(p[1]) for p in pairs]) if params.weight_by_support else None,
                tie_tol=params.tie_tol,
            )
        except NumericError:
            break
        cand_accepted, cand_rejections, cand_total = _estimate_all(lines, stats_list, candidate, params)
        if not cand_accepted or cand_total > trace[-1]:
            break
        if np.allclose(candidate, direction, atol=1e-12) and cand_total == trace[-1]:
            break
        direction = candidate
        accepted, rejections, total = cand_accepted, cand_rejections, cand_total
        trace.append(total)
    return RefineResult(direction, accepted, trace, rejections)
