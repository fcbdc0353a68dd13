"""Seeded synthetic shapes and injected defects for desk-scale benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, RegionEmpty
from .geometry import PointCloud, RigidTransform, estimate_normals, rotation_about_axis

SHAPES = ("sphere", "torus", "box", "blended-blob")
DEFECTS = ("bump", "dent", "excision", "clutter")

TORUS_MAJOR = 1.0
TORUS_MINOR = 0.4
BOX_HALF = np.array([1.0, 0.7, 0.5])


def _unit_vectors(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sphere(rng, n):
    return _unit_vectors(rng, n)


def _torus(rng, n):
    out = np.empty((0, 3))
    R, r = TORUS_MAJOR, TORUS_MINOR
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        u = rng.uniform(0.0, 2 * np.pi, m)
        v = rng.uniform(0.0, 2 * np.pi, m)
        # area element is proportional to R + r cos v
        keep = rng.uniform(0.0, R + r, m) < R + r * np.cos(v)
        u, v = u[keep], v[keep]
        ring = R + r * np.cos(v)
        pts = np.stack([ring * np.cos(u), ring * np.sin(u), r * np.sin(v)], axis=1)
        out = np.vstack([out, pts])
    return out[:n]


def _box(rng, n):
    h = BOX_HALF
    areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.uniform(-1.0, 1.0, (n, 2))
    pts = np.empty((n, 3))
    for f in range(6):
        sel = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [a for a in range(3) if a != axis]
        pts[sel, axis] = sign * h[axis]
        pts[sel, others[0]] = uv[sel, 0] * h[others[0]]
        pts[sel, others[1]] = uv[sel, 1] * h[others[1]]
    return pts


def _blob_radius(d):
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return (
        1.0
        + 0.25 * np.exp(-4.0 * ((x - 0.6) ** 2 + (y - 0.5) ** 2 + (z - 0.2) ** 2))
        + 0.18 * np.exp(-5.0 * ((x + 0.7) ** 2 + (y + 0.1) ** 2 + (z - 0.5) ** 2))
        - 0.12 * np.exp(-6.0 * ((x - 0.1) ** 2 + (y + 0.8) ** 2 + (z + 0.4) ** 2))
        + 0.08 * x * y
    )


def _blob_surface(d):
    return d * _blob_radius(d)[..., None]


def _blob(rng, n):
    out = np.empty((0, 3))
    while len(out) < n:
        m = 3 * (n - len(out)) + 16
        d = _unit_vectors(rng, m)
        # local area scale of the radial map, by finite differences
        t1 = np.cross(d, np.where(np.abs(d[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]]))
        t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
        t2 = np.cross(d, t1)
        eps = 1e-4
        s0 = _blob_surface(d)
        e1 = _blob_surface(d + eps * t1) - s0
        e2 = _blob_surface(d + eps * t2) - s0
        jac = np.linalg.norm(np.cross(e1, e2), axis=1) / (eps * eps)
        keep = rng.uniform(0.0, 3.0, m) < jac
        out = np.vstack([out, s0[keep]])
    return out[:n]


_GENERATORS = {"sphere": _sphere, "torus": _torus, "box": _box, "blended-blob": _blob}


def generate_shape(kind: str, n_points: int, noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    """Uniform random surface samples of an analytic shape plus Gaussian noise.

    Sphere has radius 1, torus radii (1, 0.4), box half-extents (1, 0.7, 0.5);
    the blended blob is a fixed asymmetric star-shaped surface around radius 1.
    """
    if kind not in _GENERATORS:
        raise InvalidParams(f"unknown shape {kind!r}; expected one of {SHAPES}")
    if n_points < 100:
        raise InvalidParams("n_points must be >= 100")
    rng = np.random.default_rng(seed)
    pts = _GENERATORS[kind](rng, n_points)
    if noise_sigma > 0:
        pts = pts + rng.normal(0.0, noise_sigma, pts.shape)
    return PointCloud(pts)


def composite_scene(n_points: int, noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    """Torus with an off-axis sphere; unlike either shape alone it has no
    rotational symmetry, so its pose is recoverable."""
    if n_points < 200:
        raise InvalidParams("n_points must be >= 200")
    rng = np.random.default_rng(seed)
    n_sphere = n_points // 3
    sphere = 0.6 * _sphere(rng, n_sphere) + np.array([1.9, 0.0, 0.5])
    torus = _torus(rng, n_points - n_sphere)
    pts = np.vstack([torus, sphere])
    if noise_sigma > 0:
        pts = pts + rng.normal(0.0, noise_sigma, pts.shape)
    return PointCloud(pts)


def random_rigid_transform(rng, max_angle_deg: float, max_translation: float) -> RigidTransform:
    """Uniform random axis, angle in [0, max], translation of length in [0, max]."""
    axis = _unit_vectors(rng, 1)[0]
    angle = np.radians(rng.uniform(0.0, max_angle_deg))
    direction = _unit_vectors(rng, 1)[0]
    t = direction * rng.uniform(0.0, max_translation)
    return RigidTransform(rotation_about_axis(axis, angle), t)


@dataclass
class DefectLabeling:
    point_labels: np.ndarray
    object_label: int
    defect_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.point_labels = np.asarray(self.point_labels, dtype=np.int8)
        if self.object_label != int(self.point_labels.any()):
            raise InvalidParams("object_label must be 1 iff some point is labeled")


def inject_defect(
    cloud: PointCloud,
    kind: str,
    magnitude: float,
    region_radius: float,
    seed: int = 0,
    normals_k: int = 15,
):
    """Apply a localized defect around a seeded surface point.

    * ``bump`` / ``dent``: points within ``region_radius`` of the center move
      along their normals by ``+/- magnitude * (1 - 0.5 (r / radius)^2)``.
    * ``excision``: region points are removed; the same number of remaining
      points closest to the region center are labeled.
    * ``clutter``: a cluster of ``max(10, region count)`` points is added
      ``magnitude`` off the surface, spread over a third of ``region_radius``.

    Returns ``(defective_cloud, DefectLabeling)``.
    """
    if kind not in DEFECTS:
        raise InvalidParams(f"unknown defect {kind!r}; expected one of {DEFECTS}")
    if magnitude < 0 or region_radius <= 0:
        raise InvalidParams("magnitude must be >= 0 and region_radius > 0")
    if region_radius >= cloud.diameter / 4:
        raise InvalidParams("region_radius must be below a quarter of the diameter")
    rng = np.random.default_rng(seed)
    pts = cloud.points
    center_idx = int(rng.integers(len(pts)))
    center = pts[center_idx]
    r = np.linalg.norm(pts - center, axis=1)
    region = np.flatnonzero(r <= region_radius)
    if len(region) == 0:
        raise RegionEmpty("defect region contains no points")
    spec = {
        "kind": kind,
        "magnitude": float(magnitude),
        "region_radius": float(region_radius),
        "center_index": center_idx,
        "seed": int(seed),
    }
    n = len(pts)
    if magnitude == 0:
        return PointCloud(pts.copy(), cloud.normals), DefectLabeling(np.zeros(n), 0, spec)

    normals = cloud.normals if cloud.has_normals else estimate_normals(cloud, normals_k).normals
    if kind in ("bump", "dent"):
        sign = 1.0 if kind == "bump" else -1.0
        falloff = 1.0 - 0.5 * (r[region] / region_radius) ** 2
        new = pts.copy()
        new[region] += sign * magnitude * falloff[:, None] * normals[region]
        labels = np.zeros(n)
        labels[region] = 1
        return PointCloud(new), DefectLabeling(labels, 1, spec)
    if kind == "excision":
        keep = np.setdiff1d(np.arange(n), region)
        if len(keep) == 0:
            raise RegionEmpty("excision would remove every point")
        kept = pts[keep]
        k = min(len(region), len(keep))
        order = np.lexsort((np.arange(len(keep)), np.linalg.norm(kept - center, axis=1)))
        labels = np.zeros(len(keep))
        labels[order[:k]] = 1
        spec["removed"] = int(len(region))
        return PointCloud(kept), DefectLabeling(labels, 1, spec)
    # clutter
    m = max(10, len(region))
    offset = center + magnitude * normals[center_idx]
    blob = offset + rng.normal(0.0, region_radius / 3.0, (m, 3))
    new = np.vstack([pts, blob])
    labels = np.concatenate([np.zeros(n), np.ones(m)])
    spec["added"] = int(m)
    return PointCloud(new), DefectLabeling(labels, 1, spec)
