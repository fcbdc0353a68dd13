"""Point clouds, rigid transforms, exact k-NN and normal estimation."""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateNeighborhood, InvalidParams, KTooLarge


def _as_points(a) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidParams(f"expected an (n, 3) array, got shape {arr.shape}")
    return arr


def bbox_diameter(points: np.ndarray) -> float:
    """Length of the diagonal of the axis-aligned bounding box."""
    if len(points) == 0:
        return 0.0
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points with optional unit normals.

    ``diameter`` is the bounding-box diagonal and is computed on construction.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    diameter: float = field(init=False)

    def __post_init__(self):
        pts = _as_points(self.points)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = _as_points(self.normals)
            if len(nrm) != len(pts):
                raise InvalidParams(
                    f"{len(nrm)} normals given for {len(pts)} points"
                )
            object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "diameter", bbox_diameter(pts))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def subset(self, indices) -> "PointCloud":
        idx = np.asarray(indices, dtype=np.intp)
        normals = None if self.normals is None else self.normals[idx]
        return PointCloud(self.points[idx], normals)

    def with_normals(self, normals) -> "PointCloud":
        return PointCloud(self.points, normals)

    def equals(self, other: "PointCloud") -> bool:
        """Bitwise equality of points and normals."""
        if not np.array_equal(self.points, other.points):
            return False
        if (self.normals is None) != (other.normals is None):
            return False
        return self.normals is None or np.array_equal(self.normals, other.normals)


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Closest rotation matrix to ``M`` in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(M)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "RigidTransform":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equivalent to applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(
            np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=tol)
            and abs(np.linalg.det(R) - 1.0) <= tol
        )

    def rotation_angle_deg(self) -> float:
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))

    def euler_zyx_deg(self) -> np.ndarray:
        """Intrinsic Z-Y-X angles (yaw, pitch, roll) in degrees."""
        R = self.rotation
        pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
        yaw = np.arctan2(R[1, 0], R[0, 0])
        roll = np.arctan2(R[2, 1], R[2, 2])
        return np.degrees(np.array([yaw, pitch, roll]))


def apply_transform(cloud: PointCloud, T: RigidTransform) -> PointCloud:
    points = T.apply(cloud.points)
    normals = None if cloud.normals is None else cloud.normals @ T.rotation.T
    return PointCloud(points, normals)


_build_counts: dict = {}
_build_lock = threading.Lock()


def kdtree(points: np.ndarray) -> cKDTree:
    """Construct a k-d tree, recording the build by point dimension."""
    tree = cKDTree(points)
    with _build_lock:
        d = points.shape[1]
        _build_counts[d] = _build_counts.get(d, 0) + 1
    return tree


def index_build_counts() -> dict:
    """Number of k-d trees built so far in this process, keyed by dimension."""
    with _build_lock:
        return dict(_build_counts)


class SpatialIndex:
    """Exact k-NN over a fixed point set.

    Backed by a k-d tree; candidate distances are recomputed exactly and ties
    are broken on the lowest point index, so results match an exhaustive scan.
    Immutable after construction and safe to query from several threads.
    """

    def __init__(self, points, workers: int = 1):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
        if pts.ndim != 2 or len(pts) == 0:
            raise InvalidParams("SpatialIndex needs a non-empty (n, d) array")
        self._points = pts
        self._points.setflags(write=False)
        self._tree = kdtree(pts)
        self.workers = workers
        self.n_queries = 0
        self._lock = threading.Lock()

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return len(self._points)

    def _exact(self, q: np.ndarray, cand: np.ndarray):
        diff = self._points[cand] - q
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        order = np.lexsort((cand, d))
        return cand[order], d[order]

    def query(self, queries, k: int):
        """k nearest neighbors of each query row.

        Returns ``(indices, distances)`` of shape ``(m, k)``, ascending by
        distance with ties on the lowest point index.
        """
        n = len(self._points)
        if k < 1:
            raise InvalidParams("k must be >= 1")
        if k > n:
            raise KTooLarge(f"k={k} exceeds indexed set size {n}")
        Q = np.ascontiguousarray(np.asarray(queries, dtype=np.float64))
        if Q.ndim == 1:
            Q = Q.reshape(1, -1)
        m = len(Q)
        with self._lock:
            self.n_queries += m
        kk = min(k + 1, n)
        d, idx = self._tree.query(Q, k=kk, workers=self.workers)
        d = np.asarray(d).reshape(m, kk)
        idx = np.asarray(idx, dtype=np.intp).reshape(m, kk)
        diff = self._points[idx] - Q[:, None, :]
        dex = np.sqrt(np.einsum("mkj,mkj->mk", diff, diff))
        rows = np.repeat(np.arange(m), kk)
        order = np.lexsort((idx.ravel(), dex.ravel(), rows)).reshape(m, kk)
        order -= (np.arange(m) * kk)[:, None]
        out_i = np.take_along_axis(idx, order, axis=1)[:, :k].copy()
        out_d = np.take_along_axis(dex, order, axis=1)[:, :k].copy()
        if kk > k:
            # the next candidate ties the k-th: equal-distance points may lie
            # outside the candidate set, so rescan the ball exactly
            edge = np.flatnonzero(d[:, k] <= d[:, k - 1] * (1.0 + 1e-9) + 1e-300)
            for r in edge:
                radius = d[r, k - 1] * (1.0 + 1e-9) + 1e-300
                cand = np.asarray(
                    self._tree.query_ball_point(Q[r], radius), dtype=np.intp
                )
                ci, cd = self._exact(Q[r], np.union1d(cand, idx[r]))
                out_i[r] = ci[:k]
                out_d[r] = cd[:k]
        return out_i, out_d


def knn(index: SpatialIndex, query, k: int) -> list[tuple[int, float]]:
    """k nearest neighbors of a single query point as ``(index, distance)``."""
    i, d = index.query(np.asarray(query, dtype=np.float64).reshape(1, -1), k)
    return [(int(a), float(b)) for a, b in zip(i[0], d[0])]


def _null_normal(direction: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to ``direction``."""
    norm = np.linalg.norm(direction)
    if norm == 0:
        return np.array([0.0, 0.0, 1.0])
    u = direction / norm
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(u)))] = 1.0
    n = np.cross(u, axis)
    return n / np.linalg.norm(n)


def _tie_break_sign(n: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(n)))
    return -n if n[j] < 0 else n


def estimate_normals(cloud: PointCloud, k: int = 15, workers: int = 1) -> PointCloud:
    """PCA normals from each point's k nearest neighbors (itself included).

    Normals are oriented along ``point - neighborhood centroid``; when that
    offset lies in the local plane the largest-magnitude component is made
    positive.  Rank-deficient neighborhoods get a deterministic normal and are
    reported with a single :class:`DegenerateNeighborhood` warning.
    """
    n = len(cloud)
    if k < 3:
        raise InvalidParams("k must be >= 3")
    if n < k:
        raise InvalidParams(f"need at least k={k} points, got {n}")
    pts = cloud.points
    index = SpatialIndex(pts, workers=workers)
    nbr, _ = index.query(pts, k)
    neigh = pts[nbr]  # (n, k, 3)
    centroid = neigh.mean(axis=1)
    centered = neigh - centroid[:, None, :]
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()
    offset = pts - centroid
    scale = np.sqrt(np.maximum(evals[:, 2], 0.0))
    degenerate = 0
    for i in range(n):
        lam = evals[i]
        if lam[2] <= 0.0 or lam[1] <= 1e-12 * lam[2]:
            degenerate += 1
            normals[i] = _tie_break_sign(_null_normal(evecs[i, :, 2]))
            continue
        nv = normals[i] / np.linalg.norm(normals[i])
        s = float(nv @ offset[i])
        if abs(s) <= 1e-6 * scale[i]:
            nv = _tie_break_sign(nv)
        elif s < 0:
            nv = -nv
        normals[i] = nv
    if degenerate:
        warnings.warn(
            f"{degenerate} degenerate neighborhood(s) in normal estimation",
            DegenerateNeighborhood,
            stacklevel=2,
        )
    return PointCloud(pts, normals)
