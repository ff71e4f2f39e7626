"""Per-patch line fitting: classifier, RANSAC-style fit, validation, growth."""

import numpy as np
import pytest

from hazeline.colorline import (
    FAIL_DEGENERATE,
    FAIL_SLOPE,
    FAIL_SUPPORT,
    FAIL_TOO_SMALL,
    FAIL_UNIMODAL,
    ClassifierParams,
    ColorLine,
    PatchStats,
    classify_patch_pixels,
    derive_patch_seed,
    fit_and_validate,
    fit_color_line,
    grow_patch_and_refit,
    naive_bayes_posterior,
    validate_color_line,
)
from hazeline.image import PatchRef

U_DIAG = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)


def line_patch_image(p0, direction, rho, shape=(7, 7)):
    """Image whose pixels sit exactly on p0 + rho*direction, row-major."""
    h, w = shape
    img = (np.asarray(p0) + np.outer(rho, direction)).reshape(h, w, 3)
    return np.clip(img, 0.0, 1.0)


def angle_deg(a, b):
    c = abs(float(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return np.degrees(np.arccos(min(1.0, c)))


class TestNaiveBayes:
    def test_hand_computed_table(self):
        lin = np.array([
            [0.9, 0.8],
            [0.5, 0.5],
            [0.1, 0.2],
            [0.0, 0.0],
            [1.0, 0.0],
        ])
        lout = np.array([
            [1.0, 1.0],
            [1.0, 1.0],
            [1.0, 1.0],
            [0.0, 0.0],
            [1.0, 1.0],
        ])
        prior = 0.3
        post = naive_bayes_posterior(prior, lin, lout)
        # row products by hand: joint_in = prior * prod(lin_row)
        expected = [
            0.3 * 0.72 / (0.3 * 0.72 + 0.7),
            0.3 * 0.25 / (0.3 * 0.25 + 0.7),
            0.3 * 0.02 / (0.3 * 0.02 + 0.7),
            0.5,  # both joints vanish: uninformative
            0.0,
        ]
        assert np.allclose(post, expected, atol=1e-12)

    def test_certain_prior_forces_posterior_one(self):
        lin = np.full((4, 3), 0.2)
        lout = np.full((4, 3), 5.0)
        assert np.allclose(naive_bayes_posterior(1.0, lin, lout), 1.0)

    def test_posteriors_complement_to_one(self):
        rng = np.random.default_rng(5)
        lin = rng.uniform(0.01, 2.0, size=(20, 3))
        lout = rng.uniform(0.01, 2.0, size=(20, 3))
        p_in = naive_bayes_posterior(0.4, lin, lout)
        p_out = naive_bayes_posterior(0.6, lout, lin)
        assert np.allclose(p_in + p_out, 1.0, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            naive_bayes_posterior(0.5, np.ones((3, 2)), np.ones((2, 3)))


class TestClassifier:
    def test_on_line_pixel_beats_half(self):
        params = ClassifierParams()
        features = np.array([[0.5, 0.5, 0.5, 0.0, 0.0]])
        post = classify_patch_pixels(features, [0.2, 0.2, 0.2], U_DIAG, params)
        assert post[0] > 0.5

    def test_distant_pixel_rejected(self):
        params = ClassifierParams()
        features = np.array([
            [0.5, 0.5, 0.5, 0.0, 0.0],
            [0.9, 0.1, 0.1, 0.0, 0.0],
        ])
        post = classify_patch_pixels(features, [0.2, 0.2, 0.2], U_DIAG, params)
        assert post[0] > 0.5 > post[1]
        assert post[1] < 1e-6

    def test_empty_patch_rejected(self):
        with pytest.raises(ValueError):
            classify_patch_pixels(np.empty((0, 5)), np.zeros(3), U_DIAG, ClassifierParams())

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            classify_patch_pixels(np.ones((2, 5)), np.zeros(3), np.zeros(3), ClassifierParams())


def test_patch_seed_decorrelates_neighbors():
    seeds = {derive_patch_seed(x, y, 0) for x in range(8) for y in range(8)}
    assert len(seeds) == 64
    assert all(0 <= s <= 0x7FFFFFFF for s in seeds)
    assert derive_patch_seed(3, 5, 7) == derive_patch_seed(3, 5, 7)
    assert derive_patch_seed(3, 5, 7) != derive_patch_seed(3, 5, 8)


class TestFitColorLine:
    def test_recovers_planted_line(self):
        rho = np.linspace(0.0, 0.6, 49)
        img = line_patch_image([0.2, 0.2, 0.2], U_DIAG, rho)
        patch = PatchRef.centered(3, 3, 3, 7, 7)
        line, reason = fit_color_line(patch, img, ClassifierParams(), rng_seed=42)
        assert reason is None
        assert line.support == 49
        assert angle_deg(line.direction, U_DIAG) <= 0.5

    def test_constant_patch_degenerate(self):
        img = np.full((7, 7, 3), 0.3)
        patch = PatchRef.centered(3, 3, 3, 7, 7)
        line, reason = fit_color_line(patch, img, ClassifierParams(), rng_seed=0)
        assert line is None
        assert reason == FAIL_DEGENERATE

    def test_survives_twenty_percent_outliers(self):
        rng = np.random.default_rng(77)
        rho = np.linspace(0.0, 0.6, 49)
        img = line_patch_image([0.2, 0.2, 0.2], U_DIAG, rho)
        flat = img.reshape(-1, 3)
        corrupt = rng.choice(49, size=10, replace=False)
        flat[corrupt] = rng.uniform(size=(10, 3))
        patch = PatchRef.centered(3, 3, 3, 7, 7)
        line, reason = fit_color_line(patch, img, ClassifierParams(), rng_seed=42)
        assert reason is None
        assert line.support >= 0.8 * 49 - 2
        assert angle_deg(line.direction, U_DIAG) <= 2.0

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(13)
        rho = np.linspace(0.0, 0.6, 49)
        img = line_patch_image([0.2, 0.2, 0.2], U_DIAG, rho)
        flat = img.reshape(-1, 3)
        flat[rng.choice(49, size=10, replace=False)] = rng.uniform(size=(10, 3))
        patch = PatchRef.centered(3, 3, 3, 7, 7)
        a, _ = fit_color_line(patch, img, ClassifierParams(), rng_seed=5)
        b, _ = fit_color_line(patch, img, ClassifierParams(), rng_seed=5)
        assert np.array_equal(a.p0, b.p0)
        assert np.array_equal(a.direction, b.direction)
        assert np.array_equal(a.inliers, b.inliers)

    def test_direction_scale_equivariant(self):
        rho = np.linspace(0.0, 0.6, 49)
        img = line_patch_image([0.2, 0.2, 0.2], U_DIAG, rho)
        patch = PatchRef.centered(3, 3, 3, 7, 7)
        full, _ = fit_color_line(patch, img, ClassifierParams(), rng_seed=9)
        dim, _ = fit_color_line(patch, 0.5 * img, ClassifierParams(), rng_seed=9)
        assert angle_deg(full.direction, dim.direction) <= np.degrees(1e-6)

    def test_normal_is_orthogonal_to_line_plane(self):
        # line displaced off the gray axis so the origin plane is defined
        rho = np.linspace(0.0, 0.5, 49)
        img = line_patch_image([0.6, 0.3, 0.2], U_DIAG, rho)
        patch = PatchRef.centered(3, 3, 3, 7, 7)
        line, reason = fit_color_line(patch, img, ClassifierParams(), rng_seed=3)
        assert reason is None
        assert line.normal is not None
        assert abs(np.linalg.norm(line.normal) - 1.0) <= 1e-9
        assert abs(line.normal @ line.direction) <= 1e-9
        assert abs(line.normal @ line.p0) <= 1e-9

    def test_gray_axis_line_has_no_normal(self):
        # p0 parallel to the direction: the through-origin plane collapses
        rho = np.linspace(0.0, 0.6, 49)
        img = line_patch_image([0.2, 0.2, 0.2], U_DIAG, rho)
        patch = PatchRef.centered(3, 3, 3, 7, 7)
        line, _ = fit_color_line(patch, img, ClassifierParams(), rng_seed=42)
        assert line.normal is None

    def test_tiny_patch_rejected(self):
        img = np.random.default_rng(1).uniform(size=(4, 4, 3))
        patch = PatchRef.centered(0, 0, 0, 4, 4)  # single pixel
        with pytest.raises(ValueError):
            fit_color_line(patch, img, ClassifierParams(), rng_seed=0)


def make_line(direction, support=40, projections=None):
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    if projections is None:
        projections = np.linspace(0.0, 0.5, support)
    return (
        ColorLine(p0=np.array([0.3, 0.3, 0.3]), direction=d, normal=None,
                  inliers=np.zeros((support, 2), dtype=int), support=support),
        PatchStats(pixel_count=49, projections=np.asarray(projections, dtype=np.float64)),
    )


class TestValidation:
    def test_all_negative_direction_flips_and_passes(self):
        line, stats = make_line([-0.6, -0.6, -0.53])
        assert validate_color_line(line, stats, ClassifierParams()) is None
        assert (line.direction >= 0).all()

    def test_mixed_sign_direction_fails_slope(self):
        line, stats = make_line([0.9, -0.3, 0.3])
        assert validate_color_line(line, stats, ClassifierParams()) == FAIL_SLOPE

    def test_bimodal_projections_fail(self):
        proj = np.concatenate([np.full(20, 0.05), np.full(20, 0.95)])
        line, stats = make_line([0.5, 0.5, 0.5], support=40, projections=proj)
        assert validate_color_line(line, stats, ClassifierParams()) == FAIL_UNIMODAL

    def test_support_checked_before_slope(self):
        # 10 of 49 pixels is under the default 0.4 fraction; the mixed-sign
        # direction would also fail but support is reported first
        line, stats = make_line([0.9, -0.3, 0.3], support=10)
        assert validate_color_line(line, stats, ClassifierParams()) == FAIL_SUPPORT

    def test_single_cluster_passes(self):
        line, stats = make_line([0.5, 0.5, 0.7])
        assert validate_color_line(line, stats, ClassifierParams()) is None


class TestGrowth:
    def degenerate_center_image(self):
        # planted line over a 31x31 field with a constant 7x7 core: the
        # small patch has no structure, its 15x15 superset does
        yy, xx = np.mgrid[0:31, 0:31]
        rho = (xx + yy) * 0.01
        img = np.clip(np.array([0.15, 0.2, 0.25]) + rho[:, :, None] * U_DIAG, 0, 1)
        img[12:19, 12:19] = img[15, 15]
        return img

    def test_fit_recovers_at_grown_size(self):
        img = self.degenerate_center_image()
        patch = PatchRef.centered(15, 15, 3, 31, 31)
        line, reason = fit_and_validate(patch, img, ClassifierParams())
        assert line is None and reason == FAIL_DEGENERATE
        line, reason = grow_patch_and_refit(patch, img, ClassifierParams())
        assert reason is None
        assert angle_deg(line.direction, U_DIAG) <= 1.0

    def test_noise_fails_at_every_size(self):
        rng = np.random.default_rng(99)
        img = rng.uniform(size=(15, 15, 3))
        patch = PatchRef.centered(7, 7, 3, 15, 15)
        params = ClassifierParams(min_inlier_fraction=0.8)
        line, reason = grow_patch_and_refit(patch, img, params)
        assert line is None
        assert reason in (FAIL_SUPPORT, FAIL_UNIMODAL, FAIL_SLOPE)

    def test_small_patch_reports_too_small(self):
        img = np.random.default_rng(3).uniform(size=(8, 8, 3))
        patch = PatchRef.centered(0, 0, 1, 8, 8)  # 2x2 corner clip: 4 px
        line, reason = fit_and_validate(patch, img, ClassifierParams())
        assert line is None and reason == FAIL_TOO_SMALL
