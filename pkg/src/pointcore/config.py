"""Pipeline configuration: nested dataclasses loaded from JSON with strict keys."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields, is_dataclass, replace
from typing import Any, Optional, get_type_hints

from .errors import ConfigError, InvalidParams
from .features import FeatureExtractorSpec
from .geometry import PointCloud
from .registration import RegistrationParams, default_fpfh_radius
from .sampling import SamplingParams

# FPFH radius for anomaly features, as a fraction of the canonical diameter
FEATURE_RADIUS_FRACTION = 0.08


@dataclass(frozen=True)
class ScoringParams:
    fusion_weights: tuple = (0.5, 0.5)
    aggregation: str = "max"
    top_q: float = 0.01
    normalization: str = "rank"
    object_normalization: str = "cross-set"

    def __post_init__(self):
        w = tuple(float(x) for x in self.fusion_weights)
        object.__setattr__(self, "fusion_weights", w)
        if len(w) != 2 or min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
            raise InvalidParams("fusion_weights must be two non-negative numbers summing to 1")
        if self.aggregation not in ("max", "top-q"):
            raise InvalidParams(f"unknown aggregation {self.aggregation!r}")
        if not 0.0 < self.top_q <= 1.0:
            raise InvalidParams("top_q must be in (0, 1]")
        if self.normalization not in ("rank", "minmax"):
            raise InvalidParams(f"unknown normalization {self.normalization!r}")
        if self.object_normalization not in ("cross-set", "per-object"):
            raise InvalidParams(f"unknown object_normalization {self.object_normalization!r}")


@dataclass(frozen=True)
class PipelineConfig:
    sampling: SamplingParams = SamplingParams()
    extractor: FeatureExtractorSpec = FeatureExtractorSpec()
    registration: RegistrationParams = RegistrationParams()
    scoring: ScoringParams = ScoringParams()
    normals_k: int = 15
    canonical_prototype: int = 0

    def __post_init__(self):
        if self.normals_k < 3:
            raise InvalidParams("normals_k must be >= 3")
        if self.canonical_prototype < 0:
            raise InvalidParams("canonical_prototype must be >= 0")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with every seed set to ``seed``."""
        reg = replace(self.registration, ransac=replace(self.registration.ransac, seed=seed))
        return replace(self, sampling=replace(self.sampling, seed=seed), registration=reg)

    def resolved(self, canonical: PointCloud) -> "PipelineConfig":
        """Fill diameter-relative defaults from the canonical prototype."""
        cfg = self
        if cfg.registration.fpfh_radius is None:
            cfg = replace(
                cfg,
                registration=replace(cfg.registration, fpfh_radius=default_fpfh_radius(canonical)),
            )
        if cfg.extractor.kind == "builtin-fpfh" and cfg.extractor.fpfh_radius is None:
            cfg = replace(
                cfg,
                extractor=replace(
                    cfg.extractor, fpfh_radius=FEATURE_RADIUS_FRACTION * canonical.diameter
                ),
            )
        ransac, icp = cfg.registration.ransac, cfg.registration.icp
        if ransac.inlier_threshold is None:
            ransac = replace(ransac, inlier_threshold=0.015 * canonical.diameter)
        if icp.max_correspondence_distance is None:
            icp = replace(icp, max_correspondence_distance=0.05 * canonical.diameter)
        return replace(cfg, registration=replace(cfg.registration, ransac=ransac, icp=icp))

    def to_dict(self) -> dict:
        return to_dict(self)

    def build_dict(self) -> dict:
        """Parameters that determine bank contents (scoring excluded)."""
        d = to_dict(self)
        d.pop("scoring")
        d["extractor"].pop("path")
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.build_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


BankBuildConfig = PipelineConfig


def to_dict(obj) -> Any:
    if is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, tuple):
        return [to_dict(x) for x in obj]
    return obj


def from_dict(cls, data: Optional[dict], where: str = "config"):
    """Build dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        tp = hints[name]
        if is_dataclass(tp):
            kwargs[name] = from_dict(tp, value, f"{where}.{name}")
        elif tp is tuple:
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, InvalidParams) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def config_from_dict(data: dict) -> PipelineConfig:
    return from_dict(PipelineConfig, data)


def dumps(cfg: PipelineConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True)
