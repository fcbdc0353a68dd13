"""Coarse-to-fine rigid registration.

Global alignment matches FPFH descriptors (mutual nearest neighbors) and runs
a seeded RANSAC over 3-point samples.  Local refinement is point-to-plane ICP
with a linearized rotation solved by pseudoinverse; a point-to-point variant
is kept for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import (
    DegenerateSample,
    InvalidParams,
    NoCorrespondences,
    RegistrationFailed,
)
from .geometry import PointCloud, RigidTransform, SpatialIndex, kdtree, project_to_rotation

FPFH_DIM = kernels.FPFH_DIM


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_tol: float = 1e-6
    # None means 5% of the target diameter
    max_correspondence_distance: Optional[float] = None
    loss_threshold: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidParams("max_iterations must be >= 1")
        if self.convergence_tol <= 0:
            raise InvalidParams("convergence_tol must be > 0")
        if self.max_correspondence_distance is not None and self.max_correspondence_distance <= 0:
            raise InvalidParams("max_correspondence_distance must be > 0")


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 100000
    # None means 1.5% of the target diameter
    inlier_threshold: Optional[float] = None
    sample_size: int = 3
    seed: int = 0
    early_exit_inlier_fraction: float = 0.9
    confidence: float = 0.999
    edge_similarity: float = 0.9
    batch_size: int = 500
    min_inlier_fraction: float = 0.05

    def __post_init__(self):
        if self.sample_size < 3:
            raise InvalidParams("sample_size must be >= 3")
        if self.max_iterations < 1 or self.batch_size < 1:
            raise InvalidParams("iteration counts must be >= 1")
        if self.inlier_threshold is not None and self.inlier_threshold <= 0:
            raise InvalidParams("inlier_threshold must be > 0")
        if not 0.0 < self.confidence <= 1.0:
            raise InvalidParams("confidence must be in (0, 1]")


class IcpResult(NamedTuple):
    transform: RigidTransform
    final_loss: float
    iterations: int


# ---------------------------------------------------------------- descriptors


def radius_neighbors(points: np.ndarray, radius: float, workers: int = 1):
    """CSR neighbor lists within ``radius``, self excluded, ascending index."""
    tree = kdtree(points)
    lists = tree.query_ball_point(points, radius, workers=workers, return_sorted=True)
    counts = np.fromiter((len(l) for l in lists), dtype=np.intp, count=len(lists))
    flat = np.fromiter(
        (j for l in lists for j in l), dtype=np.intp, count=int(counts.sum())
    )
    owner = np.repeat(np.arange(len(points)), counts)
    keep = flat != owner
    flat = flat[keep]
    counts = np.bincount(owner[keep], minlength=len(points))
    indptr = np.zeros(len(points) + 1, dtype=np.intp)
    np.cumsum(counts, out=indptr[1:])
    return indptr, flat


def compute_fpfh(cloud: PointCloud, radius: float, workers: int = 1) -> np.ndarray:
    """33-bin FPFH descriptor for every point, shape ``(n, 33)``.

    Isolated points (no neighbor within ``radius``) get all-zero descriptors.
    """
    if not cloud.has_normals:
        raise InvalidParams("FPFH needs normals")
    if radius <= 0:
        raise InvalidParams("radius must be > 0")
    indptr, indices = radius_neighbors(cloud.points, radius, workers)
    s = kernels.spfh(cloud.points, cloud.normals, indptr, indices)
    return np.asarray(kernels.fpfh(cloud.points, s, indptr, indices))


def mutual_nearest(src_feat: np.ndarray, tgt_feat: np.ndarray, chunk: int = 1024):
    """Mutual nearest neighbors in descriptor space by exhaustive scan.

    Returns an ``(m, 2)`` array of ``(src_index, tgt_index)`` pairs.
    """
    A = np.asarray(src_feat, dtype=np.float64)
    B = np.asarray(tgt_feat, dtype=np.float64)
    a2 = np.einsum("ij,ij->i", A, A)
    b2 = np.einsum("ij,ij->i", B, B)
    fwd = np.empty(len(A), dtype=np.intp)
    bwd = np.empty(len(B), dtype=np.intp)
    bwd_best = np.full(len(B), np.inf)
    for s in range(0, len(A), chunk):
        D = a2[s:s + chunk, None] + b2[None, :] - 2.0 * (A[s:s + chunk] @ B.T)
        fwd[s:s + chunk] = np.argmin(D, axis=1)
        col = np.argmin(D, axis=0)
        colv = D[col, np.arange(len(B))]
        better = colv < bwd_best
        bwd[better] = col[better] + s
        bwd_best[better] = colv[better]
    src_idx = np.arange(len(A))
    mutual = bwd[fwd] == src_idx
    return np.stack([src_idx[mutual], fwd[mutual]], axis=1)


# ------------------------------------------------------------ closed-form fits


def _kabsch(a: np.ndarray, b: np.ndarray):
    """Batched least-squares rotation/translation with ``b ~ R a + t``.

    ``a``, ``b`` have shape ``(..., m, 3)``.
    """
    ca = a.mean(axis=-2)
    cb = b.mean(axis=-2)
    H = np.einsum("...mi,...mj->...ij", a - ca[..., None, :], b - cb[..., None, :])
    U, S, Vt = np.linalg.svd(H)
    V = np.swapaxes(Vt, -1, -2)
    Ut = np.swapaxes(U, -1, -2)
    d = np.sign(np.linalg.det(V @ Ut))
    d = np.where(d == 0, 1.0, d)
    V = V.copy()
    V[..., :, 2] *= d[..., None]
    R = V @ Ut
    t = cb - np.einsum("...ij,...j->...i", R, ca)
    return R, t, S


def estimate_rigid_from_correspondences(pairs) -> RigidTransform:
    """SVD rigid fit minimizing sum ||R a_i + t - b_i||^2 (det(R) = +1)."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1:] != (2, 3):
        raise InvalidParams("pairs must have shape (m, 2, 3)")
    a, b = arr[:, 0], arr[:, 1]
    if len(a) < 3 or _collinear(a):
        raise DegenerateSample("need at least 3 non-collinear correspondences")
    R, t, _ = _kabsch(a, b)
    return RigidTransform(R, t)


def _collinear(a: np.ndarray, rel: float = 1e-10) -> bool:
    c = a - a.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    return s[0] == 0.0 or s[1] <= rel * s[0]


# ------------------------------------------------------------------- RANSAC


class RansacResult(NamedTuple):
    transform: RigidTransform
    inlier_fraction: float


def ransac_global_registration(
    src: PointCloud,
    tgt: PointCloud,
    src_feat: np.ndarray,
    tgt_feat: np.ndarray,
    params: RansacParams = RansacParams(),
) -> RansacResult:
    """Seeded RANSAC over mutual-NN descriptor correspondences.

    Hypotheses are drawn in fixed-size batches, each with its own generator
    seeded from ``(seed, batch index)``, so the result does not depend on how
    batches are scheduled.  The best hypothesis has the most correspondences
    with residual below the inlier threshold; ties go to the earliest draw.
    """
    corr = mutual_nearest(src_feat, tgt_feat)
    m = len(corr)
    if m == 0:
        raise NoCorrespondences("no mutual nearest neighbors between descriptors")
    a_all = src.points[corr[:, 0]]
    b_all = tgt.points[corr[:, 1]]
    thr = params.inlier_threshold
    if thr is None:
        thr = 0.015 * tgt.diameter
    thr2 = thr * thr
    k = params.sample_size
    if m < k:
        raise RegistrationFailed(f"only {m} correspondences for samples of size {k}")

    best_count = -1
    best_R = np.eye(3)
    best_t = np.zeros(3)
    done = 0
    batch = 0
    while done < params.max_iterations:
        size = min(params.batch_size, params.max_iterations - done)
        rng = np.random.default_rng([params.seed, batch])
        samp = rng.integers(0, m, size=(size, k))
        valid = np.ones(size, dtype=bool)
        s_sorted = np.sort(samp, axis=1)
        valid &= np.all(s_sorted[:, 1:] != s_sorted[:, :-1], axis=1)
        A = a_all[samp]
        B = b_all[samp]
        # pairwise edge lengths must agree between the two clouds
        ii, jj = np.triu_indices(k, 1)
        la = np.linalg.norm(A[:, ii] - A[:, jj], axis=-1)
        lb = np.linalg.norm(B[:, ii] - B[:, jj], axis=-1)
        lo = np.minimum(la, lb)
        hi = np.maximum(la, lb)
        valid &= np.all(lo >= params.edge_similarity * hi, axis=1)
        area = np.linalg.norm(np.cross(A[:, 1] - A[:, 0], A[:, 2] - A[:, 0]), axis=-1)
        scale = np.max(la, axis=1)
        valid &= area > 1e-8 * scale * scale
        idx = np.flatnonzero(valid)
        if len(idx):
            R, t, _ = _kabsch(A[idx], B[idx])
            pred = np.einsum("bij,mj->bmi", R, a_all) + t[:, None, :]
            res = pred - b_all[None]
            counts = np.count_nonzero(np.einsum("bmi,bmi->bm", res, res) < thr2, axis=1)
            j = int(np.argmax(counts))
            if counts[j] > best_count:
                best_count = int(counts[j])
                best_R, best_t = R[j], t[j]
        done += size
        batch += 1
        frac = max(best_count, 0) / m
        if frac >= params.early_exit_inlier_fraction:
            break
        if frac > 0 and params.confidence < 1.0:
            p_good = frac ** k
            if p_good >= 1.0:
                break
            needed = math.log(1.0 - params.confidence) / math.log1p(-p_good)
            if done >= needed:
                break
    frac = max(best_count, 0) / m
    if frac < params.min_inlier_fraction:
        raise RegistrationFailed(f"best inlier fraction {frac:.4f} below threshold")
    return RansacResult(RigidTransform(project_to_rotation(best_R), best_t), frac)


# ---------------------------------------------------------------------- ICP


class PlaneStep(NamedTuple):
    omega: np.ndarray
    translation: np.ndarray
    rank_deficient: bool


def point_plane_system(p: np.ndarray, q: np.ndarray, n: np.ndarray):
    """Rows ``[p x n, n]`` and right-hand side ``-(p - q) . n``."""
    A = np.hstack([np.cross(p, n), n])
    b = -np.einsum("ij,ij->i", p - q, n)
    return A, b


def solve_point_plane_step(p, q, n, rcond: float = 1e-12) -> PlaneStep:
    """Minimum-norm least-squares solve of the linearized point-to-plane step.

    Solved through the eigen-decomposition of the 6x6 normal matrix; directions
    with eigenvalue below ``rcond`` times the largest are treated as null.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    n = np.asarray(n, dtype=np.float64).reshape(-1, 3)
    if len(p) < 1:
        raise InvalidParams("need at least one correspondence")
    A, b = point_plane_system(p, q, n)
    AtA = A.T @ A
    Atb = A.T @ b
    w, V = np.linalg.eigh(AtA)
    cutoff = rcond * max(w[-1], 0.0)
    keep = w > cutoff
    x = V[:, keep] @ ((V[:, keep].T @ Atb) / w[keep])
    return PlaneStep(x[:3], x[3:], bool(np.count_nonzero(keep) < 6))


def small_angle_rotation(omega) -> np.ndarray:
    """First-order rotation with ``omega = (alpha, beta, gamma)``, re-orthonormalized."""
    a, b, g = omega
    M = np.array([[1.0, -g, b], [g, 1.0, -a], [-b, a, 1.0]])
    return project_to_rotation(M)


def _icp(src, tgt, init, params, step, history, workers):
    if len(tgt) == 0 or len(src) == 0:
        raise InvalidParams("empty cloud")
    index = SpatialIndex(tgt.points, workers=workers)
    max_d = params.max_correspondence_distance
    if max_d is None:
        max_d = 0.05 * tgt.diameter
    R = init.rotation.copy()
    t = init.translation.copy()
    prev = None
    evals = 0
    while True:
        P = src.points @ R.T + t
        j, d = index.query(P, 1)
        mask = d[:, 0] <= max_d
        if not mask.any():
            raise NoCorrespondences("all ICP correspondences rejected")
        loss, dR, dt = step(P[mask], j[mask, 0])
        evals += 1
        if history is not None:
            history.append(loss)
        if loss <= params.loss_threshold:
            break
        # relative change in either direction: correspondence switches can
        # raise the loss slightly, and stopping there leaves the pose short
        # of the fixed point
        if prev is not None and abs(prev - loss) <= params.convergence_tol * prev:
            break
        if evals > params.max_iterations:
            break
        R = dR @ R
        t = dR @ t + dt
        prev = loss
    return IcpResult(RigidTransform(project_to_rotation(R), t), float(loss), evals)


def point_plane_icp(
    src: PointCloud,
    tgt: PointCloud,
    init: RigidTransform = RigidTransform.identity(),
    params: IcpParams = IcpParams(),
    history: Optional[list] = None,
    workers: int = 1,
) -> IcpResult:
    """Point-to-plane ICP onto a fixed target with normals.

    ``final_loss`` is the sum of squared point-to-plane residuals at the
    returned pose; ``history`` (if given) receives the loss evaluated after
    each correspondence search.  The loss descends except where
    correspondences switch, which near convergence can raise it by a few
    ulps of its relative change.
    """
    if not tgt.has_normals:
        raise InvalidParams("point-to-plane ICP needs target normals")
    Q, N = tgt.points, tgt.normals

    def step(p, qi):
        q, n = Q[qi], N[qi]
        r = np.einsum("ij,ij->i", p - q, n)
        loss = float(r @ r)
        sol = solve_point_plane_step(p, q, n)
        return loss, small_angle_rotation(sol.omega), sol.translation

    return _icp(src, tgt, init, params, step, history, workers)


def point_point_icp(
    src: PointCloud,
    tgt: PointCloud,
    init: RigidTransform = RigidTransform.identity(),
    params: IcpParams = IcpParams(),
    history: Optional[list] = None,
    workers: int = 1,
) -> IcpResult:
    """Point-to-point ICP with a closed-form rigid fit per iteration."""
    Q = tgt.points

    def step(p, qi):
        q = Q[qi]
        diff = p - q
        loss = float(np.einsum("ij,ij->", diff, diff))
        if len(p) >= 3 and not _collinear(p):
            R, t, _ = _kabsch(p, q)
        else:
            R, t = np.eye(3), (q - p).mean(axis=0)
        return loss, R, t

    return _icp(src, tgt, init, params, step, history, workers)


# ------------------------------------------------------------------ pipeline


@dataclass(frozen=True)
class RegistrationParams:
    ransac: RansacParams = RansacParams()
    icp: IcpParams = IcpParams()
    # None means an FPFH radius derived from the target's point spacing
    fpfh_radius: Optional[float] = None
    local: str = "point-plane"
    # global matching runs on a farthest-point subsample of this size (0: all)
    global_points: int = 1000

    def __post_init__(self):
        if self.local not in ("point-plane", "point-point", "none"):
            raise InvalidParams(f"unknown local optimizer {self.local!r}")
        if self.global_points < 0:
            raise InvalidParams("global_points must be >= 0")


# FPFH radius for descriptor matching, as a fraction of the target diameter;
# smaller radii give near-constant, ambiguous descriptors on smooth surfaces
REGISTRATION_RADIUS_FRACTION = 0.5


def default_fpfh_radius(cloud: PointCloud) -> float:
    return REGISTRATION_RADIUS_FRACTION * cloud.diameter


class RegistrationResult(NamedTuple):
    transform: RigidTransform
    coarse: RigidTransform
    inlier_fraction: float
    final_loss: float
    iterations: int


def global_view(cloud: PointCloud, n: int) -> PointCloud:
    """Farthest-point subsample of ``n`` points used for descriptor matching.

    Starts at index 0, so it needs no seed; clouds of at most ``n`` points
    (or ``n == 0``) are returned as they are.
    """
    if n == 0 or len(cloud) <= n:
        return cloud
    idx = kernels.greedy_select(cloud.points, np.zeros(1, dtype=np.intp), n, True)
    return cloud.subset(np.asarray(idx, dtype=np.intp))


def register(
    src: PointCloud,
    tgt: PointCloud,
    params: RegistrationParams = RegistrationParams(),
    tgt_feat: Optional[np.ndarray] = None,
    fpfh_radius: Optional[float] = None,
    workers: int = 1,
) -> RegistrationResult:
    """RANSAC on FPFH matches followed by the configured local refinement.

    Both clouds must carry normals.  ``fpfh_radius`` overrides the params
    value; with neither set it is derived from the target.  Descriptors and
    RANSAC use :func:`global_view` subsamples; ``tgt_feat``, if given, must
    belong to the target's subsample.  ICP runs on the full clouds.
    """
    radius = fpfh_radius if fpfh_radius is not None else params.fpfh_radius
    if radius is None:
        radius = default_fpfh_radius(tgt)
    gs = global_view(src, params.global_points)
    gt = global_view(tgt, params.global_points)
    if tgt_feat is None:
        tgt_feat = compute_fpfh(gt, radius, workers)
    elif len(tgt_feat) != len(gt):
        raise InvalidParams("tgt_feat does not match the target's global subsample")
    src_feat = compute_fpfh(gs, radius, workers)
    coarse, frac = ransac_global_registration(gs, gt, src_feat, tgt_feat, params.ransac)
    if params.local == "none":
        return RegistrationResult(coarse, coarse, frac, float("nan"), 0)
    icp = point_plane_icp if params.local == "point-plane" else point_point_icp
    res = icp(src, tgt, coarse, params.icp, workers=workers)
    return RegistrationResult(res.transform, coarse, frac, res.final_loss, res.iterations)


def pose_error(est: RigidTransform, truth: RigidTransform):
    """Rotation error in degrees and translation error (same units as input)."""
    dR = est.rotation @ truth.rotation.T
    ang = RigidTransform(dR, np.zeros(3)).rotation_angle_deg()
    return ang, float(np.linalg.norm(est.translation - truth.translation))
