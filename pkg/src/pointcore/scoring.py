"""Inference: coordinate-restricted scoring, rank normalization and fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bank import MemoryBank, derive_seed, prepare_cloud
from .config import PipelineConfig, ScoringParams
from .errors import BankTooSmall, DimensionMismatch, InvalidParams, LengthMismatch
from .features import extract_center_features, interpolate_all
from .geometry import PointCloud, RigidTransform, apply_transform, index_build_counts
from .registration import register
from .sampling import greedy_downsample

log = logging.getLogger(__name__)


@dataclass(eq=False)
class ScoreSet:
    raw_coord: np.ndarray
    raw_feat: np.ndarray
    norm_coord: np.ndarray
    norm_feat: np.ndarray
    fused: np.ndarray
    object_score: float
    transform: Optional[RigidTransform] = None
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.fused)

    def equals(self, other: "ScoreSet") -> bool:
        names = ("raw_coord", "raw_feat", "norm_coord", "norm_feat", "fused")
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in names) and (
            self.object_score == other.object_score
        )


def compute_raw_scores(bank: MemoryBank, test_coords, test_feats):
    """Per-point coordinate and feature anomaly scores.

    Each test point makes one 3-NN query against the bank coordinates.  The
    coordinate score is the mean of those three distances; the feature score
    is the smallest feature distance to the same three elements.
    """
    coords = np.asarray(test_coords, dtype=np.float64).reshape(-1, 3)
    feats = np.asarray(test_feats, dtype=np.float64)
    if len(bank) < 3:
        raise BankTooSmall(f"bank has {len(bank)} elements, need at least 3")
    if feats.ndim != 2 or feats.shape[1] != bank.feature_dim:
        raise DimensionMismatch(
            f"test features have dimension {feats.shape[-1]}, bank has {bank.feature_dim}"
        )
    if len(feats) != len(coords):
        raise LengthMismatch("test coordinates and features must be index-aligned")
    idx, dc = bank.index.query(coords, 3)
    diff = bank.features[idx] - feats[:, None, :]
    dp = np.sqrt(np.einsum("mkd,mkd->mk", diff, diff))
    return dc.mean(axis=1), dp.min(axis=1)


def rank_normalize(scores) -> np.ndarray:
    """Fractional rank divided by length: ascending ranks 1..n, ties averaged."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    n = len(s)
    if n == 0:
        raise InvalidParams("cannot normalize an empty score list")
    if not np.all(np.isfinite(s)):
        raise InvalidParams("scores must be finite")
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.concatenate([[True], sorted_s[1:] != sorted_s[:-1]]))
    ends = np.concatenate([starts[1:], [n]])
    avg = (starts + 1 + ends) / 2.0  # mean of ranks starts+1 .. ends
    ranks = np.empty(n)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks / n


def minmax_normalize(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).ravel()
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full(len(s), 0.5)
    return (s - lo) / (hi - lo)


def normalize(scores, method: str = "rank") -> np.ndarray:
    return rank_normalize(scores) if method == "rank" else minmax_normalize(scores)


def fuse_scores(norm_coord, norm_feat, weights=(0.5, 0.5)) -> np.ndarray:
    a = np.asarray(norm_coord, dtype=np.float64)
    b = np.asarray(norm_feat, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    wc, wp = weights
    if min(wc, wp) < 0 or abs(wc + wp - 1.0) > 1e-12:
        raise InvalidParams("weights must be non-negative and sum to 1")
    if wp == 0:
        return a.copy()
    if wc == 0:
        return b.copy()
    return wc * a + wp * b


def object_score(fused, aggregation: str = "max", top_q: float = 0.01) -> float:
    """Max of the point scores, or the mean of the top ``top_q`` fraction."""
    s = np.asarray(fused, dtype=np.float64).ravel()
    if len(s) == 0:
        raise InvalidParams("no point scores")
    if aggregation == "max":
        return float(s.max())
    if aggregation == "top-q":
        k = max(1, int(np.ceil(top_q * len(s))))
        return float(np.sort(s)[-k:].mean())
    raise InvalidParams(f"unknown aggregation {aggregation!r}")


def score_features(
    bank: MemoryBank, coords, feats, params: ScoringParams = ScoringParams()
) -> ScoreSet:
    """Raw scores, per-object normalization, fusion and object score."""
    before = bank.index.n_queries
    builds = index_build_counts()
    rc, rf = compute_raw_scores(bank, coords, feats)
    nc = normalize(rc, params.normalization)
    nf = normalize(rf, params.normalization)
    fused = fuse_scores(nc, nf, params.fusion_weights)
    after = index_build_counts()
    stats = {
        "bank_queries": bank.index.n_queries - before,
        "index_builds": {d: after.get(d, 0) - builds.get(d, 0) for d in after},
    }
    return ScoreSet(rc, rf, nc, nf, fused, object_score(fused, params.aggregation, params.top_q), stats=stats)


def run_inference(
    bank: MemoryBank,
    test_cloud: PointCloud,
    cfg: Optional[PipelineConfig] = None,
    features: Optional[np.ndarray] = None,
    workers: int = 1,
) -> ScoreSet:
    """Score every point of ``test_cloud`` against ``bank``.

    The cloud is registered onto the bank's reference, downsampled to centers,
    featurized at the centers and interpolated to all points before scoring.
    ``cfg`` defaults to the configuration stored in the bank; build-relevant
    differences are logged and the bank's values win.
    """
    bank_cfg = bank.pipeline_config
    if cfg is None:
        cfg = bank_cfg
    else:
        if cfg.resolved(bank.reference).fingerprint() != bank.fingerprint:
            log.warning("configuration differs from the one the bank was built with; using the bank's")
        cfg = replace(bank_cfg, scoring=cfg.scoring)
    builds0 = index_build_counts()
    queries0 = bank.index.n_queries

    cloud = prepare_cloud(test_cloud, cfg.normals_k, workers)
    reg = register(
        cloud, bank.reference, cfg.registration, tgt_feat=bank.reference_descriptors(workers), workers=workers
    )
    cloud = apply_transform(cloud, reg.transform)
    sampling = replace(
        cfg.sampling,
        seed=derive_seed(cfg.sampling.seed, 2**31),
        s_max=min(cfg.sampling.s_max, len(cloud)),
    )
    centers = greedy_downsample(cloud, sampling)
    cf = extract_center_features(
        cloud, centers, cfg.extractor, features=features, normals_k=cfg.normals_k, workers=workers
    )
    feats = interpolate_all(cloud, centers, cf, workers=workers)
    out = score_features(bank, cloud.points, feats, cfg.scoring)
    out.transform = reg.transform
    builds1 = index_build_counts()
    out.stats.update(
        {
            "inference_index_builds": {
                d: builds1.get(d, 0) - builds0.get(d, 0) for d in builds1 if builds1.get(d, 0) != builds0.get(d, 0)
            },
            "inference_bank_queries": bank.index.n_queries - queries0,
            "n_points": len(cloud),
            "n_centers": len(centers),
            "inlier_fraction": reg.inlier_fraction,
            "icp_iterations": reg.iterations,
        }
    )
    return out
