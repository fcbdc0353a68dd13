"""The compiled kernels and the numpy fallback must agree bit for bit."""

import numpy as np
import pytest

from pointcore import kernels, _kernels_py
from pointcore.geometry import estimate_normals
from pointcore.registration import radius_neighbors
from pointcore.synthetic import generate_shape

BACKENDS = kernels.backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def _inputs(cloud, radius):
    indptr, indices = radius_neighbors(cloud.points, radius)
    return cloud.points, cloud.normals, indptr, indices


def test_selected_backend_is_reported():
    assert kernels.BACKEND in BACKENDS
    assert kernels.FPFH_DIM == 33


@needs_ext
class TestParity:
    def test_spfh(self, blob_cloud):
        pts, nrm, ip, ix = _inputs(blob_cloud, 0.3)
        a = BACKENDS["cython"].spfh(pts, nrm, ip, ix)
        b = BACKENDS["numpy"].spfh(pts, nrm, ip, ix)
        assert np.array_equal(np.asarray(a), np.asarray(b))

    def test_spfh_near_antiparallel_normals(self):
        # this cloud once split a bin decision between numpy and libm acos
        cloud = estimate_normals(generate_shape("blended-blob", 5000, 0.001, 0))
        pts, nrm, ip, ix = _inputs(cloud, 0.08 * cloud.diameter)
        a = BACKENDS["cython"].spfh(pts, nrm, ip, ix)
        b = BACKENDS["numpy"].spfh(pts, nrm, ip, ix)
        assert np.array_equal(np.asarray(a), np.asarray(b))

    def test_fpfh(self, blob_cloud):
        pts, nrm, ip, ix = _inputs(blob_cloud, 0.3)
        h = _kernels_py.spfh(pts, nrm, ip, ix)
        a = BACKENDS["cython"].fpfh(pts, h, ip, ix)
        b = BACKENDS["numpy"].fpfh(pts, h, ip, ix)
        assert np.array_equal(np.asarray(a), np.asarray(b))

    @pytest.mark.parametrize("use_min", [False, True])
    def test_greedy(self, blob_cloud, use_min):
        init = np.array([5], dtype=np.intp)
        a = BACKENDS["cython"].greedy_select(blob_cloud.points, init, 200, use_min)
        b = BACKENDS["numpy"].greedy_select(blob_cloud.points, init, 200, use_min)
        assert np.array_equal(np.asarray(a), np.asarray(b))


class TestHistogramShape:
    def test_spfh_rows_sum_to_300(self, blob_cloud):
        pts, nrm, ip, ix = _inputs(blob_cloud, 0.3)
        h = kernels.spfh(pts, nrm, ip, ix)
        has = np.diff(ip) > 0
        np.testing.assert_allclose(np.asarray(h)[has].sum(axis=1), 300.0, rtol=1e-12)

    def test_isolated_point_is_zero(self):
        pts = np.array([[0.0, 0, 0], [10.0, 0, 0]])
        nrm = np.array([[0.0, 0, 1], [0.0, 0, 1]])
        ip, ix = radius_neighbors(pts, 1.0)
        h = kernels.spfh(pts, nrm, ip, ix)
        f = kernels.fpfh(pts, h, ip, ix)
        assert not np.asarray(f).any()
