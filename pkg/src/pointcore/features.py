"""Per-center feature extraction and three-neighbor feature interpolation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FeatureFileMismatch, InvalidParams, TooFewCenters
from .geometry import PointCloud, SpatialIndex, estimate_normals
from .registration import compute_fpfh

KINDS = ("builtin-fpfh", "external-file")


@dataclass(frozen=True)
class FeatureExtractorSpec:
    kind: str = "builtin-fpfh"
    # builtin only; None is resolved against the canonical prototype diameter
    fpfh_radius: Optional[float] = None
    # external only
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"unknown extractor kind {self.kind!r}")
        if self.kind == "builtin-fpfh" and self.path is not None:
            raise InvalidParams("builtin-fpfh takes no path")
        if self.kind == "external-file" and self.fpfh_radius is not None:
            raise InvalidParams("external-file takes no fpfh_radius")


def extract_center_features(
    cloud: PointCloud,
    center_indices,
    spec: FeatureExtractorSpec,
    features: Optional[np.ndarray] = None,
    normals_k: int = 15,
    workers: int = 1,
) -> np.ndarray:
    """Feature row for each center, shape ``(len(centers), D)``.

    ``builtin-fpfh`` computes descriptors on the full cloud and keeps the
    center rows.  ``external-file`` looks rows up by point index in
    ``features`` (or the file at ``spec.path``).
    """
    centers = np.asarray(center_indices, dtype=np.intp)
    if len(centers) and (centers.min() < 0 or centers.max() >= len(cloud)):
        raise InvalidParams("center index out of range")
    if spec.kind == "builtin-fpfh":
        if spec.fpfh_radius is None:
            raise InvalidParams("fpfh_radius must be resolved before extraction")
        if not cloud.has_normals:
            cloud = estimate_normals(cloud, normals_k, workers=workers)
        return compute_fpfh(cloud, spec.fpfh_radius, workers)[centers]
    if features is None:
        if spec.path is None:
            raise InvalidParams("external-file extractor needs a path or a feature matrix")
        from .io import parse_feature_file

        features = parse_feature_file(spec.path)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) != len(cloud):
        raise FeatureFileMismatch(
            f"feature file has {len(features)} rows for a cloud of {len(cloud)} points"
        )
    return features[centers].copy()


def interpolation_weights(dist: np.ndarray) -> np.ndarray:
    """Weights of the three-term product formula for rows of 3 distances.

    ``w1 = D2 D3 / (D1 D2 + D1 D3 + D2 D3)`` and cyclically, i.e. normalized
    inverse distances.  A row with a zero distance puts all weight on its
    first zero entry.
    """
    d = np.asarray(dist, dtype=np.float64).reshape(-1, 3)
    d1, d2, d3 = d[:, 0], d[:, 1], d[:, 2]
    num = np.stack([d2 * d3, d1 * d3, d1 * d2], axis=1)
    den = d1 * d2 + d1 * d3 + d2 * d3
    zero = np.any(d == 0.0, axis=1)
    w = np.empty_like(d)
    ok = ~zero
    w[ok] = num[ok] / den[ok, None]
    if zero.any():
        first = np.argmax(d[zero] == 0.0, axis=1)
        w[zero] = 0.0
        w[np.flatnonzero(zero), first] = 1.0
    return w


def _combine(feats: np.ndarray, dist: np.ndarray) -> np.ndarray:
    # feats: (m, 3, D), dist: (m, 3)
    d1, d2, d3 = dist[:, 0:1], dist[:, 1:2], dist[:, 2:3]
    m1, m2, m3 = feats[:, 0], feats[:, 1], feats[:, 2]
    num = d1 * d2 * m3 + d1 * d3 * m2 + d2 * d3 * m1
    den = d1 * d2 + d1 * d3 + d2 * d3
    out = np.empty_like(m1)
    zero = np.any(dist == 0.0, axis=1)
    ok = ~zero
    out[ok] = num[ok] / den[ok]
    if zero.any():
        rows = np.flatnonzero(zero)
        first = np.argmax(dist[zero] == 0.0, axis=1)
        out[rows] = feats[rows, first]
    return out


def _center_index(centers) -> SpatialIndex:
    if isinstance(centers, SpatialIndex):
        return centers
    pts = centers.points if isinstance(centers, PointCloud) else np.asarray(centers)
    return SpatialIndex(pts)


def interpolate_feature(query, centers, center_features: np.ndarray) -> np.ndarray:
    """Feature at ``query`` from its three nearest centers.

    ``centers`` is a :class:`PointCloud`, an ``(s, 3)`` array or a prebuilt
    :class:`SpatialIndex` aligned with ``center_features``.
    """
    index = _center_index(centers)
    if len(index) < 3:
        raise TooFewCenters(f"need at least 3 centers, got {len(index)}")
    F = np.asarray(center_features, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
        squeeze = True
    else:
        squeeze = False
    idx, dist = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3), 3)
    out = _combine(F[idx], dist)[0]
    return out[0] if squeeze else out


def interpolate_all(
    cloud: PointCloud,
    center_indices,
    center_features: np.ndarray,
    workers: int = 1,
) -> np.ndarray:
    """Feature for every point of ``cloud``, row ``i`` for point ``i``.

    Centers keep their own features verbatim; other points are interpolated
    from the three nearest centers.
    """
    centers = np.asarray(center_indices, dtype=np.intp)
    if len(centers) < 3:
        raise TooFewCenters(f"need at least 3 centers, got {len(centers)}")
    F = np.asarray(center_features, dtype=np.float64)
    if len(F) != len(centers):
        raise InvalidParams("one feature row per center is required")
    out = np.empty((len(cloud), F.shape[1]))
    is_center = np.zeros(len(cloud), dtype=bool)
    is_center[centers] = True
    rest = np.flatnonzero(~is_center)
    if len(rest):
        index = SpatialIndex(cloud.points[centers], workers=workers)
        idx, dist = index.query(cloud.points[rest], 3)
        out[rest] = _combine(F[idx], dist)
    out[centers] = F
    return out
