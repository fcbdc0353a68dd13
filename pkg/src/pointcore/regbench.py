"""Registration ablations on the torus-plus-sphere scene.

Two studies:

* stability: one fixed pair registered with many RANSAC seeds; the spread of
  the recovered Euler angles with and without ICP refinement.
* local objective: point-to-plane versus point-to-point ICP started from the
  same coarse pose on many independent pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bank import derive_seed
from .geometry import RigidTransform, apply_transform, estimate_normals
from .registration import (
    compute_fpfh,
    default_fpfh_radius,
    global_view,
    point_plane_icp,
    point_point_icp,
    ransac_global_registration,
    RegistrationParams,
)
from .synthetic import composite_scene, random_rigid_transform


@dataclass(frozen=True)
class PairSpec:
    n_points: int = 2000
    noise: float = 0.001  # fraction of the diameter
    max_angle_deg: float = 30.0
    max_translation: float = 0.1  # fraction of the diameter


def make_pair(spec: PairSpec, seed: int):
    """``(src, tgt, truth)`` with ``truth`` mapping ``src`` onto ``tgt``.

    The two clouds are independent samplings of the scene, so no point has
    an exact counterpart.
    """
    diam = composite_scene(spec.n_points, 0.0, 0).diameter
    sigma = spec.noise * diam
    tgt = composite_scene(spec.n_points, sigma, derive_seed(seed, 0))
    src0 = composite_scene(spec.n_points, sigma, derive_seed(seed, 1))
    truth = random_rigid_transform(
        np.random.default_rng(derive_seed(seed, 2)), spec.max_angle_deg, spec.max_translation * diam
    )
    src = apply_transform(src0, truth.inverse())
    return estimate_normals(src), estimate_normals(tgt), truth


def alignment_error(src_points: np.ndarray, est: RigidTransform, truth: RigidTransform) -> float:
    """Mean displacement between the estimated and true placement of ``src``."""
    return float(np.linalg.norm(est.apply(src_points) - truth.apply(src_points), axis=1).mean())


def _params(tgt, reg: RegistrationParams):
    diam = tgt.diameter
    ransac = reg.ransac
    if ransac.inlier_threshold is None:
        ransac = replace(ransac, inlier_threshold=0.015 * diam)
    icp = reg.icp
    if icp.max_correspondence_distance is None:
        icp = replace(icp, max_correspondence_distance=0.05 * diam)
    radius = reg.fpfh_radius if reg.fpfh_radius is not None else default_fpfh_radius(tgt)
    return ransac, icp, radius


@dataclass
class AblationTable:
    seeds: int
    coarse_euler: np.ndarray  # (seeds, 3) degrees
    fine_euler: np.ndarray
    trials: int
    plane_errors: np.ndarray
    point_errors: np.ndarray
    diameter: float
    meta: dict = field(default_factory=dict)

    @property
    def coarse_std(self) -> np.ndarray:
        return self.coarse_euler.std(axis=0)

    @property
    def fine_std(self) -> np.ndarray:
        return self.fine_euler.std(axis=0)

    @property
    def std_ratio(self) -> float:
        """Smallest per-angle reduction factor of the Euler-angle spread."""
        fine = np.maximum(self.fine_std, np.finfo(float).tiny)
        return float(np.min(self.coarse_std / fine))

    @property
    def plane_win_rate(self) -> float:
        return float(np.mean(self.plane_errors <= self.point_errors))

    def format(self) -> str:
        rows = [
            f"# registration ablation: {self.seeds} RANSAC seeds on one pair, {self.trials} ICP trials",
            "stage,std_yaw_deg,std_pitch_deg,std_roll_deg",
            "ransac," + ",".join("%.6e" % v for v in self.coarse_std),
            "ransac+point-plane-icp," + ",".join("%.6e" % v for v in self.fine_std),
            "std_reduction_min,%.6e" % self.std_ratio,
            "",
            "local,mean_alignment_error_pct_diameter,median_alignment_error_pct_diameter",
        ]
        for name, e in (("point-plane", self.plane_errors), ("point-point", self.point_errors)):
            pct = 100.0 * e / self.diameter
            rows.append(f"{name},%.6e,%.6e" % (pct.mean(), np.median(pct)))
        rows.append("point-plane_not_worse_fraction,%.4f" % self.plane_win_rate)
        return "\n".join(rows) + "\n"


def registration_ablation(
    n_seeds: int = 20,
    n_trials: int = 50,
    n_points: int = 2000,
    seed: int = 0,
    noise: float = 0.001,
    params: RegistrationParams = RegistrationParams(),
    workers: int = 1,
) -> AblationTable:
    spec = PairSpec(n_points=n_points, noise=noise)

    # stability over RANSAC seeds on one fixed pair
    src, tgt, truth = make_pair(spec, derive_seed(seed, 0))
    ransac, icp, radius = _params(tgt, params)
    gs, gt = global_view(src, params.global_points), global_view(tgt, params.global_points)
    fs, ft = compute_fpfh(gs, radius, workers), compute_fpfh(gt, radius, workers)
    coarse, fine = [], []
    for s in range(n_seeds):
        rp = replace(ransac, seed=derive_seed(seed, 1, s))
        c, _ = ransac_global_registration(gs, gt, fs, ft, rp)
        f = point_plane_icp(src, tgt, c, icp, workers=workers)
        coarse.append(c.euler_zyx_deg())
        fine.append(f.transform.euler_zyx_deg())

    # point-plane versus point-point from the same coarse pose
    plane, point = [], []
    for t in range(n_trials):
        src, tgt, truth = make_pair(spec, derive_seed(seed, 2, t))
        ransac, icp, radius = _params(tgt, params)
        gs, gt = global_view(src, params.global_points), global_view(tgt, params.global_points)
        rp = replace(ransac, seed=derive_seed(seed, 3, t))
        c, _ = ransac_global_registration(
            gs, gt, compute_fpfh(gs, radius, workers), compute_fpfh(gt, radius, workers), rp
        )
        a = point_plane_icp(src, tgt, c, icp, workers=workers)
        b = point_point_icp(src, tgt, c, icp, workers=workers)
        plane.append(alignment_error(src.points, a.transform, truth))
        point.append(alignment_error(src.points, b.transform, truth))

    return AblationTable(
        seeds=n_seeds,
        coarse_euler=np.array(coarse).reshape(-1, 3),
        fine_euler=np.array(fine).reshape(-1, 3),
        trials=n_trials,
        plane_errors=np.array(plane),
        point_errors=np.array(point),
        diameter=tgt.diameter,
    )
