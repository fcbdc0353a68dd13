"""The bound coordinate/feature memory bank: construction and persistence."""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .config import PipelineConfig, config_from_dict
from .errors import (
    ChecksumMismatch,
    FormatVersionMismatch,
    InvalidParams,
    NoCorrespondences,
    RegistrationFailed,
)
from .features import extract_center_features
from .geometry import PointCloud, SpatialIndex, apply_transform, estimate_normals
from .registration import compute_fpfh, global_view, register
from .sampling import greedy_downsample

log = logging.getLogger(__name__)

MAGIC = b"PCBANK\x00\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIQQI")


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for a sub-task."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0] >> 1)


@dataclass(eq=False)
class MemoryBank:
    """Index-aligned coordinates and features of all banked centers.

    ``reference`` is the canonical prototype (with normals) that test clouds
    are registered onto.  The only search structure is the coordinate index.
    """

    coords: np.ndarray
    features: np.ndarray
    provenance: np.ndarray
    reference: PointCloud
    config: dict
    fingerprint: str
    skipped: list = field(default_factory=list)
    index: SpatialIndex = field(init=False, repr=False)
    _reg_feat: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.coords = np.ascontiguousarray(self.coords, dtype=np.float64).reshape(-1, 3)
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.provenance = np.ascontiguousarray(self.provenance, dtype=np.int32)
        if self.features.ndim != 2 or len(self.features) != len(self.coords):
            raise InvalidParams("coordinates and features must be index-aligned")
        if len(self.provenance) != len(self.coords):
            raise InvalidParams("one provenance entry per element is required")
        self.index = SpatialIndex(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def pipeline_config(self) -> PipelineConfig:
        return config_from_dict(self.config)

    def reference_descriptors(self, workers: int = 1) -> np.ndarray:
        """Registration descriptors of the reference subsample, computed once."""
        if self._reg_feat is None:
            reg = self.pipeline_config.registration
            ref = global_view(self.reference, reg.global_points)
            self._reg_feat = compute_fpfh(ref, reg.fpfh_radius, workers)
        return self._reg_feat

    def equals(self, other: "MemoryBank") -> bool:
        return (
            np.array_equal(self.coords, other.coords)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.provenance, other.provenance)
            and self.reference.equals(other.reference)
            and self.config == other.config
            and self.fingerprint == other.fingerprint
        )


def prepare_cloud(cloud: PointCloud, normals_k: int, workers: int = 1) -> PointCloud:
    return cloud if cloud.has_normals else estimate_normals(cloud, normals_k, workers=workers)


def build_memory_bank(
    prototypes: Sequence[PointCloud],
    cfg: PipelineConfig = PipelineConfig(),
    features: Optional[Sequence[np.ndarray]] = None,
    workers: int = 1,
) -> MemoryBank:
    """Register prototypes onto the canonical one and bank their centers.

    ``features`` supplies one per-point matrix per prototype for the
    ``external-file`` extractor.  Prototypes whose registration fails are
    skipped and listed in ``bank.skipped``.
    """
    if len(prototypes) == 0:
        raise InvalidParams("at least one prototype is required")
    c = cfg.canonical_prototype
    if c >= len(prototypes):
        raise InvalidParams(f"canonical prototype {c} does not exist")
    if features is not None and len(features) != len(prototypes):
        raise InvalidParams("one feature matrix per prototype is required")
    canon = prepare_cloud(prototypes[c], cfg.normals_k, workers)
    cfg = cfg.resolved(canon)
    canon_feat = compute_fpfh(
        global_view(canon, cfg.registration.global_points), cfg.registration.fpfh_radius, workers
    )

    coords, feats, prov, skipped = [], [], [], []
    for i, proto in enumerate(prototypes):
        cloud = canon if i == c else prepare_cloud(proto, cfg.normals_k, workers)
        if i != c:
            reg = replace(
                cfg.registration,
                ransac=replace(cfg.registration.ransac, seed=derive_seed(cfg.registration.ransac.seed, i)),
            )
            try:
                res = register(cloud, canon, reg, tgt_feat=canon_feat, workers=workers)
            except (RegistrationFailed, NoCorrespondences) as exc:
                log.warning("prototype %d skipped: %s", i, exc)
                skipped.append({"prototype": i, "reason": str(exc)})
                continue
            cloud = apply_transform(cloud, res.transform)
        # s_max is a ceiling; smaller prototypes contribute all their points
        sampling = replace(
            cfg.sampling,
            seed=derive_seed(cfg.sampling.seed, i),
            s_max=min(cfg.sampling.s_max, len(cloud)),
        )
        centers = greedy_downsample(cloud, sampling)
        f = extract_center_features(
            cloud,
            centers,
            cfg.extractor,
            features=None if features is None else features[i],
            normals_k=cfg.normals_k,
            workers=workers,
        )
        coords.append(cloud.points[centers])
        feats.append(f)
        prov.append(np.full(len(centers), i, dtype=np.int32))
    if not coords:
        raise RegistrationFailed("no prototype could be registered")
    return MemoryBank(
        coords=np.vstack(coords),
        features=np.vstack(feats),
        provenance=np.concatenate(prov),
        reference=canon,
        config=cfg.to_dict(),
        fingerprint=cfg.fingerprint(),
        skipped=skipped,
    )


# ------------------------------------------------------------------ file format
#
# little-endian:
#   magic[8] version:u32 feature_dim:u32 n:u64 n_ref:u64 config_len:u32
#   config JSON (utf-8)  fingerprint[32]
#   coords f64[n*3]  features f64[n*D]  provenance i32[n]
#   reference points f64[n_ref*3]  reference normals f64[n_ref*3]
#   sha256 of all preceding bytes [32]


def bank_to_bytes(bank: MemoryBank) -> bytes:
    cfg = json.dumps(bank.config, sort_keys=True, separators=(",", ":")).encode()
    ref = bank.reference
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, bank.feature_dim, len(bank), len(ref), len(cfg)),
        cfg,
        bytes.fromhex(bank.fingerprint),
        bank.coords.astype("<f8").tobytes(),
        bank.features.astype("<f8").tobytes(),
        bank.provenance.astype("<i4").tobytes(),
        ref.points.astype("<f8").tobytes(),
        ref.normals.astype("<f8").tobytes(),
    ]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def bank_from_bytes(data: bytes) -> MemoryBank:
    if len(data) < 12 or data[:8] != MAGIC:
        raise ChecksumMismatch("not a memory bank file (bad magic or truncated)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(version, FORMAT_VERSION)
    if len(data) < _HEADER.size + 32:
        raise ChecksumMismatch("bank file truncated")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatch("bank checksum mismatch (corrupt or truncated file)")
    _, _, dim, n, n_ref, cfg_len = _HEADER.unpack_from(body, 0)
    expected = _HEADER.size + cfg_len + 32 + 8 * n * 3 + 8 * n * dim + 4 * n + 8 * n_ref * 6
    if expected != len(body):
        raise ChecksumMismatch("bank payload length disagrees with header")
    off = _HEADER.size
    cfg = json.loads(body[off:off + cfg_len].decode())
    off += cfg_len
    fp = body[off:off + 32].hex()
    off += 32

    def take(dtype, count, shape):
        nonlocal off
        size = np.dtype(dtype).itemsize * count
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=off).reshape(shape)
        off += size
        return arr.astype(dtype[1:] if dtype.startswith("<") else dtype)

    coords = take("<f8", n * 3, (n, 3))
    feats = take("<f8", n * dim, (n, dim))
    prov = take("<i4", n, (n,))
    ref_pts = take("<f8", n_ref * 3, (n_ref, 3))
    ref_nrm = take("<f8", n_ref * 3, (n_ref, 3))
    return MemoryBank(coords, feats, prov, PointCloud(ref_pts, ref_nrm), cfg, fp)


def save_bank(bank: MemoryBank, path) -> None:
    with open(path, "wb") as fh:
        fh.write(bank_to_bytes(bank))


def load_bank(path) -> MemoryBank:
    with open(path, "rb") as fh:
        return bank_from_bytes(fh.read())
