import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointcore.errors import FeatureFileMismatch, InvalidParams, TooFewCenters
from pointcore.features import (
    FeatureExtractorSpec,
    extract_center_features,
    interpolate_all,
    interpolate_feature,
    interpolation_weights,
)
from pointcore.geometry import PointCloud, apply_transform
from pointcore.synthetic import random_rigid_transform

BUILTIN = FeatureExtractorSpec(fpfh_radius=0.3)


class TestInterpolateFeature:
    centers = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, -2.0]])
    feats = np.array([3.0, 6.0, 9.0])

    def test_hand_case(self):
        np.testing.assert_allclose(interpolation_weights([[1.0, 2.0, 2.0]]), [[0.5, 0.25, 0.25]], atol=1e-15)
        got = interpolate_feature([0.0, 0.0, 0.0], self.centers, self.feats)
        assert abs(got - 5.25) <= 1e-12

    def test_equidistant_gives_mean(self):
        c = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        assert interpolate_feature([0, 0, 0], c, self.feats) == pytest.approx(6.0, abs=1e-12)

    def test_at_center(self):
        got = interpolate_feature(self.centers[1], self.centers, self.feats)
        assert got == 6.0

    def test_vector_features(self):
        F = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        got = interpolate_feature([0.0, 0.0, 0.0], self.centers, F)
        np.testing.assert_allclose(got, 0.5 * F[0] + 0.25 * F[1] + 0.25 * F[2], atol=1e-12)

    def test_too_few_centers(self):
        with pytest.raises(TooFewCenters):
            interpolate_feature([0, 0, 0], self.centers[:2], self.feats[:2])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-6, 1e3), min_size=3, max_size=3))
    def test_weights_convex(self, d):
        w = interpolation_weights([d])[0]
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12

    def test_zero_distance_rule(self):
        w = interpolation_weights([[0.5, 0.0, 0.0]])
        assert w.tolist() == [[0.0, 1.0, 0.0]]


class TestInterpolateAll:
    def test_all_centers(self, rng):
        c = PointCloud(rng.normal(size=(20, 3)))
        centers = rng.permutation(20)
        F = rng.normal(size=(20, 4))
        out = interpolate_all(c, centers, F)
        want = np.empty_like(F)
        want[centers] = F
        assert np.array_equal(out, want)

    def test_passthrough_and_convexity(self, rng):
        c = PointCloud(rng.uniform(size=(1000, 3)))
        centers = rng.choice(1000, 100, replace=False)
        F = rng.normal(size=(100, 5))
        out = interpolate_all(c, centers, F)
        assert np.array_equal(out[centers], F)
        # every row inside the per-dimension range of its 3 nearest centers
        cp = c.points[centers]
        rest = np.setdiff1d(np.arange(1000), centers)
        for i in rest[::25]:
            nn = np.argsort(np.linalg.norm(cp - c.points[i], axis=1), kind="stable")[:3]
            assert np.all(out[i] >= F[nn].min(axis=0) - 1e-12)
            assert np.all(out[i] <= F[nn].max(axis=0) + 1e-12)

    def test_matches_single_point_version(self, rng):
        c = PointCloud(rng.uniform(size=(200, 3)))
        centers = np.arange(0, 200, 10)
        F = rng.normal(size=(20, 3))
        out = interpolate_all(c, centers, F)
        for i in (1, 55, 199):
            np.testing.assert_allclose(out[i], interpolate_feature(c.points[i], c.points[centers], F), atol=1e-14)

    def test_deterministic_across_workers(self, rng):
        c = PointCloud(rng.uniform(size=(3000, 3)))
        centers = np.arange(0, 3000, 7)
        F = rng.normal(size=(len(centers), 8))
        assert np.array_equal(interpolate_all(c, centers, F), interpolate_all(c, centers, F, workers=4))


class TestExtract:
    def test_builtin_deterministic(self, blob_cloud):
        a = extract_center_features(blob_cloud, [0, 5, 9], BUILTIN)
        b = extract_center_features(blob_cloud, [0, 5, 9], BUILTIN)
        assert a.shape == (3, 33) and np.array_equal(a, b)

    def test_builtin_rigid_invariance(self, blob_cloud, rng):
        T = random_rigid_transform(rng, 45.0, 1.0)
        idx = np.arange(0, len(blob_cloud), 50)
        a = extract_center_features(blob_cloud, idx, BUILTIN)
        b = extract_center_features(apply_transform(blob_cloud, T), idx, BUILTIN)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_external_lookup(self, rng):
        c = PointCloud(rng.normal(size=(10, 3)))
        F = rng.normal(size=(10, 4))
        out = extract_center_features(c, [0, 9], FeatureExtractorSpec(kind="external-file"), features=F)
        assert np.array_equal(out, F[[0, 9]])

    def test_external_count_mismatch(self, rng):
        c = PointCloud(rng.normal(size=(10, 3)))
        with pytest.raises(FeatureFileMismatch):
            extract_center_features(c, [0], FeatureExtractorSpec(kind="external-file"), features=np.zeros((9, 4)))

    def test_spec_validation(self):
        with pytest.raises(InvalidParams):
            FeatureExtractorSpec(kind="pointmae")
        with pytest.raises(InvalidParams):
            FeatureExtractorSpec(kind="builtin-fpfh", path="x.txt")
        with pytest.raises(InvalidParams):
            extract_center_features(PointCloud(np.zeros((3, 3))), [0], FeatureExtractorSpec())
