"""Spreading sparse estimates across the image.

Two mechanisms, one per field.  Transmission is regularized by exact
nearest-neighbor transfer: every pixel takes the value of its closest
anchor in the 5-D color and position feature space, searched with a
k-d tree.  The per-patch airlight magnitudes are interpolated by
minimizing a quadratic energy: confidence-weighted data terms plus an
edge-aware graph Laplacian smoother plus a linear pull toward small
magnitudes, solved with diagonally preconditioned conjugate gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import NumericError
from .image import as_image, as_scalar_map, feature_grid, to_feature_vector


class FeatureIndex:
    """Exact nearest-neighbor search over points in R^k.

    A median-split k-d tree; queries return the stored point with the
    smallest Euclidean distance, ties broken by the lowest insertion
    index.  Distances are accumulated dimension by dimension in index
    order so results are bit-for-bit reproducible against a linear scan
    using the same accumulation.
    """

    def __init__(self, points, payloads):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("points must be a non-empty (n, k) array")
        pay = np.asarray(payloads, dtype=np.float64)
        if pay.shape != (len(pts),):
            raise ValueError("payloads must be one scalar per point")
        self.points = pts
        self.payloads = pay
        self._rows = [tuple(row) for row in pts.tolist()]
        self._dims = pts.shape[1]
        n = len(pts)
        self._axis = [0] * n
        self._left = [-1] * n
        self._right = [-1] * n
        self._root = self._build(np.arange(n), 0)

    def _build(self, idx, depth):
        if len(idx) == 0:
            return -1
        axis = depth % self._dims
        order = np.lexsort((idx, self.points[idx, axis]))
        mid = len(idx) // 2
        node = int(idx[order[mid]])
        self._axis[node] = axis
        self._left[node] = self._build(idx[order[:mid]], depth + 1)
        self._right[node] = self._build(idx[order[mid + 1:]], depth + 1)
        return node

    def query(self, q) -> tuple[int, float]:
        """Index and distance of the nearest stored point to ``q``."""
        qt = tuple(np.asarray(q, dtype=np.float64).tolist())
        if len(qt) != self._dims:
            raise ValueError(f"query has {len(qt)} dimensions, index has {self._dims}")
        best_i, best_d2 = self._search(qt)
        return best_i, math.sqrt(best_d2)

    def _search(self, qt):
        rows, axes = self._rows, self._axis
        left, right = self._left, self._right
        best_i, best_d2 = -1, math.inf
        stack = [(self._root, 0.0)]
        while stack:
            node, bound = stack.pop()
            if node < 0 or bound > best_d2:
                continue
            row = rows[node]
            d2 = 0.0
            for a, b in zip(qt, row):
                diff = a - b
                d2 += diff * diff
            if d2 < best_d2 or (d2 == best_d2 and node < best_i):
                best_i, best_d2 = node, d2
            axis = axes[node]
            diff = qt[axis] - row[axis]
            if diff < 0.0:
                near, far = left[node], right[node]
            else:
                near, far = right[node], left[node]
            # push far first so the near side is explored before the
            # bound check can discard the far side; the plane distance
            # uses <= pruning at pop time, which keeps exact ties alive
            stack.append((far, diff * diff))
            stack.append((near, 0.0))
        return best_i, best_d2

    def query_many(self, queries):
        """Vector form of query: returns (indices, distances) arrays."""
        qs = np.asarray(queries, dtype=np.float64)
        if qs.ndim != 2 or qs.shape[1] != self._dims:
            raise ValueError("queries must be an (m, k) array")
        indices = np.empty(len(qs), dtype=np.intp)
        dists = np.empty(len(qs))
        for i, row in enumerate(qs.tolist()):
            best_i, best_d2 = self._search(tuple(row))
            indices[i] = best_i
            dists[i] = math.sqrt(best_d2)
        return indices, dists


def build_feature_index(anchors) -> FeatureIndex:
    """Index a sequence of (feature vector, payload scalar) anchors."""
    anchors = list(anchors)
    if not anchors:
        raise ValueError("at least one anchor is required")
    features = np.stack([np.asarray(f, dtype=np.float64) for f, _ in anchors])
    payloads = np.array([float(v) for _, v in anchors])
    return FeatureIndex(features, payloads)


def nn_regularize_transmission(img, anchors, spatial_weight: float) -> np.ndarray:
    """Transmission map carried from anchors by nearest feature match.

    ``anchors`` is a sequence of ((x, y), t) pairs; each image pixel
    receives the t of the anchor closest to its own feature vector.
    The output is clamped to [0, 1].
    """
    img = as_image(img)
    anchors = list(anchors)
    if not anchors:
        raise ValueError("at least one anchor is required")
    index = build_feature_index(
        [(to_feature_vector(img, x, y, spatial_weight), t) for (x, y), t in anchors]
    )
    features = feature_grid(img, spatial_weight)
    nearest, _ = index.query_many(features)
    values = index.payloads[nearest]
    return np.clip(values.reshape(img.shape[:2]), 0.0, 1.0)


@dataclass
class InterpolationSystem:
    """The assembled quadratic: matrix, right-hand side, and the parts
    needed to evaluate the energy afterwards."""

    shape: tuple
    data_weights: np.ndarray
    laplacian: sparse.csr_matrix
    alpha: float
    beta: float
    b_vec: np.ndarray
    a_tilde: np.ndarray
    matrix: sparse.csr_matrix
    rhs: np.ndarray

    @property
    def dimension(self) -> int:
        return self.shape[0] * self.shape[1]


def assemble_interpolation_system(estimates, sigmas, img, alpha: float, beta: float,
                                  eps: float = 1e-4) -> InterpolationSystem:
    """Assemble the airlight interpolation energy in row-major order.

    ``estimates`` holds the per-pixel magnitude estimates with NaN at
    pixels that have none; ``sigmas`` their confidences.  Data weights
    are 1/sigma^2 scaled so the largest is one.  The Laplacian couples
    4-neighbors with weight 1/(||I(x)-I(y)||^2 + eps), and the linear
    term pulls each magnitude down in proportion to beta/||I(x)||.
    Minimizing the energy is solving (W + alpha*L) a = W a~ - beta/2 b.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    est = as_scalar_map(estimates, shape=(h, w))
    sig = as_scalar_map(sigmas, shape=(h, w))
    if alpha < 0.0 or beta < 0.0:
        raise ValueError("alpha and beta must be non-negative")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    known = np.isfinite(est)
    if not known.any():
        raise ValueError("no magnitude estimates to interpolate")

    n = h * w
    weights = np.zeros(n)
    flat_known = known.ravel()
    weights[flat_known] = 1.0 / np.maximum(sig.ravel()[flat_known], 1e-6) ** 2
    weights /= weights.max()

    ids = np.arange(n).reshape(h, w)
    rows, cols, vals = [], [], []
    for (ia, ib) in (
        (ids[:, :-1].ravel(), ids[:, 1:].ravel()),
        (ids[:-1, :].ravel(), ids[1:, :].ravel()),
    ):
        diff = img.reshape(-1, 3)[ia] - img.reshape(-1, 3)[ib]
        wgt = 1.0 / ((diff ** 2).sum(axis=1) + eps)
        rows.extend([ia, ib, ia, ib])
        cols.extend([ib, ia, ia, ib])
        vals.extend([-wgt, -wgt, wgt, wgt])
    laplacian = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )

    norms = np.linalg.norm(img.reshape(-1, 3), axis=1)
    b_vec = 1.0 / np.maximum(norms, eps)
    a_tilde = np.where(flat_known, est.ravel(), 0.0)
    matrix = (sparse.diags(weights) + alpha * laplacian).tocsr()
    rhs = weights * a_tilde - 0.5 * beta * b_vec
    return InterpolationSystem((h, w), weights, laplacian, alpha, beta,
                               b_vec, a_tilde, matrix, rhs)


def interpolation_energy(system: InterpolationSystem, a) -> float:
    """The quadratic energy of a flat magnitude vector."""
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.shape != (system.dimension,):
        raise ValueError("vector length does not match the system")
    d = a - system.a_tilde
    data = float(d @ (system.data_weights * d))
    smooth = float(a @ system.laplacian.dot(a))
    return data + system.alpha * smooth + system.beta * float(system.b_vec @ a)


def solve_airlight_field(system: InterpolationSystem, tol: float = 1e-6, max_iter=None):
    """Minimize the interpolation energy with preconditioned CG.

    Starts from a constant field at the mean estimate (the Laplacian
    annihilates constants, so this start costs no smoothness energy at
    all, unlike the estimates extended by zero whose jumps at the set
    boundary put the initial residual on the scale of the edge-weight
    cap).  A Jacobi preconditioner is applied, and iteration stops when
    the relative residual drops below ``tol``.  Returns the magnitude
    map clamped to [0, 1] and a SolveInfo; raises NumericError carrying
    the last residual when ``max_iter`` (default 10*sqrt(n)) is
    exhausted first.
    """
    n = system.dimension
    if max_iter is None or max_iter <= 0:
        max_iter = int(math.ceil(10.0 * math.sqrt(n)))
    m = system.matrix
    set_mask = system.data_weights > 0.0
    if set_mask.any():
        x = np.full(n, float(system.a_tilde[set_mask].mean()))
    else:
        x = system.a_tilde.copy()
    r = system.rhs - m.dot(x)
    rhs_norm = float(np.linalg.norm(system.rhs))
    if rhs_norm == 0.0:
        field = np.clip(x, 0.0, 1.0).reshape(system.shape)
        return field, SolveInfo(0, 0.0)
    diag = m.diagonal()
    inv_diag = np.where(diag > 0.0, 1.0 / np.maximum(diag, 1e-300), 0.0)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    residual = float(np.linalg.norm(r)) / rhs_norm
    iterations = 0
    while residual > tol:
        if iterations >= max_iter:
            raise NumericError(
                f"airlight interpolation stalled at residual {residual:.3e} "
                f"after {iterations} iterations", residual=residual)
        mp = m.dot(p)
        denom = float(p @ mp)
        if denom <= 0.0:
            raise NumericError("airlight interpolation lost positive definiteness",
                               residual=residual)
        step = rz / denom
        x += step * p
        r -= step * mp
        z = inv_diag * r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
        residual = float(np.linalg.norm(r)) / rhs_norm
        iterations += 1
    field = np.clip(x, 0.0, 1.0).reshape(system.shape)
    return field, SolveInfo(iterations, residual)


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float
