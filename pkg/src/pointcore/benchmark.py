"""Synthetic categories and the object/point-level evaluation harness."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .bank import MemoryBank, build_memory_bank, derive_seed
from .config import PipelineConfig
from .errors import InvalidParams
from .geometry import PointCloud, RigidTransform, apply_transform, bbox_diameter
from .metrics import aupr, auroc
from .scoring import ScoreSet, fuse_scores, normalize, object_score, run_inference
from .synthetic import DEFECTS, SHAPES, DefectLabeling, generate_shape, inject_defect, random_rigid_transform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CategorySpec:
    """One synthetic category; lengths are fractions of the shape diameter."""

    name: str
    shape: str = "blended-blob"
    n_points: int = 5000
    noise: float = 0.001
    n_prototypes: int = 4
    n_good: int = 20
    n_bad: int = 20
    defect: str = "bump"
    magnitude: float = 0.1
    region_radius: float = 0.08
    max_angle_deg: float = 30.0
    max_translation: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidParams(f"unknown shape {self.shape!r}")
        if self.defect not in DEFECTS:
            raise InvalidParams(f"unknown defect {self.defect!r}")
        if self.n_prototypes < 1 or self.n_good < 0 or self.n_bad < 0:
            raise InvalidParams("category counts must be non-negative (>= 1 prototype)")


@dataclass
class TestObject:
    name: str
    cloud: PointCloud
    labels: DefectLabeling
    # rigid pose applied to the canonical-frame sampling
    pose: Optional[RigidTransform] = None


def generate_category(spec: CategorySpec):
    """Posed prototypes and labeled good/defective test objects.

    Every object is an independent surface sampling with its own noise and a
    random rigid pose, so both bank building and inference must register.
    """
    diam = bbox_diameter(generate_shape(spec.shape, 1000, 0.0, spec.seed).points)
    sigma = spec.noise * diam
    rng = np.random.default_rng(derive_seed(spec.seed, 7))
    prototypes = []
    for i in range(spec.n_prototypes):
        c = generate_shape(spec.shape, spec.n_points, sigma, derive_seed(spec.seed, 1, i))
        if i > 0:
            c = apply_transform(c, random_rigid_transform(rng, spec.max_angle_deg, spec.max_translation * diam))
        prototypes.append(c)
    tests = []
    for j in range(spec.n_good + spec.n_bad):
        bad = j >= spec.n_good
        c = generate_shape(spec.shape, spec.n_points, sigma, derive_seed(spec.seed, 2, j))
        if bad:
            c, lab = inject_defect(
                c, spec.defect, spec.magnitude * diam, spec.region_radius * diam, derive_seed(spec.seed, 3, j)
            )
        else:
            lab = DefectLabeling(np.zeros(len(c)), 0, {})
        pose = random_rigid_transform(rng, spec.max_angle_deg, spec.max_translation * diam)
        c = apply_transform(c, pose)
        name = f"{'bad' if bad else 'good'}_{j - spec.n_good if bad else j:03d}"
        tests.append(TestObject(name, c, lab, pose))
    return prototypes, tests


@dataclass
class ObjectResult:
    name: str
    object_label: int
    scores: ScoreSet
    point_labels: np.ndarray
    seconds: float


@dataclass
class CategoryReport:
    name: str
    o_auroc: float
    p_auroc: float
    o_aupr: float
    p_aupr: float
    seconds_per_object: float
    objects: list = field(default_factory=list)
    results: list = field(default_factory=list, repr=False)

    def metrics(self) -> dict:
        return {
            "o_auroc": self.o_auroc,
            "p_auroc": self.p_auroc,
            "o_aupr": self.o_aupr,
            "p_aupr": self.p_aupr,
        }


@dataclass
class MetricReport:
    o_auroc: float
    p_auroc: float
    o_aupr: float
    p_aupr: float
    seconds_per_object: float
    categories: list = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        """Plain-data form; ``timing=False`` omits wall-clock fields."""
        def cat(c: CategoryReport):
            d = {"name": c.name, **c.metrics(), "objects": c.objects}
            if timing:
                d["seconds_per_object"] = c.seconds_per_object
            return d

        out = {
            "o_auroc": self.o_auroc,
            "p_auroc": self.p_auroc,
            "o_aupr": self.o_aupr,
            "p_aupr": self.p_aupr,
            "categories": [cat(c) for c in self.categories],
        }
        if timing:
            out["seconds_per_object"] = self.seconds_per_object
        return out


def object_level_scores(results: Sequence[ObjectResult], cfg: PipelineConfig) -> np.ndarray:
    """One score per test object.

    ``cross-set``: aggregate raw coordinate and feature scores per object,
    normalize each across the test set, then fuse.  ``per-object``: the
    object score of each object's own fused point scores.
    """
    sp = cfg.scoring
    if sp.object_normalization == "per-object":
        return np.array([r.scores.object_score for r in results])
    oc = [object_score(r.scores.raw_coord, sp.aggregation, sp.top_q) for r in results]
    of = [object_score(r.scores.raw_feat, sp.aggregation, sp.top_q) for r in results]
    return fuse_scores(normalize(oc, sp.normalization), normalize(of, sp.normalization), sp.fusion_weights)


def evaluate_objects(
    bank: MemoryBank,
    tests: Sequence[TestObject],
    cfg: Optional[PipelineConfig] = None,
    name: str = "category",
    features: Optional[Sequence[np.ndarray]] = None,
    workers: int = 1,
) -> CategoryReport:
    """Score every test object and compute the four ranking metrics."""
    if cfg is None:
        cfg = bank.pipeline_config
    results = []
    for i, t in enumerate(tests):
        t0 = time.perf_counter()
        s = run_inference(bank, t.cloud, cfg, None if features is None else features[i], workers=workers)
        dt = time.perf_counter() - t0
        results.append(ObjectResult(t.name, t.labels.object_label, s, t.labels.point_labels, dt))
    obj = object_level_scores(results, cfg)
    y_obj = np.array([r.object_label for r in results])
    y_pt = np.concatenate([r.point_labels for r in results])
    s_pt = np.concatenate([r.scores.fused for r in results])
    objects = [
        {"name": r.name, "object_label": int(r.object_label), "object_score": float(o),
         "fused_max": float(r.scores.object_score)}
        for r, o in zip(results, obj)
    ]
    nan = float("nan")
    two = 0 < y_obj.sum() < len(y_obj)
    two_pt = 0 < y_pt.sum() < len(y_pt)
    rep = CategoryReport(
        name=name,
        o_auroc=auroc(y_obj, obj) if two else nan,
        p_auroc=auroc(y_pt, s_pt) if two_pt else nan,
        o_aupr=aupr(y_obj, obj) if y_obj.any() else nan,
        p_aupr=aupr(y_pt, s_pt) if y_pt.any() else nan,
        seconds_per_object=float(np.mean([r.seconds for r in results])) if results else nan,
        objects=objects,
        results=results,
    )
    return rep


def summarize(categories: Sequence[CategoryReport]) -> MetricReport:
    def mean(attr):
        vals = [getattr(c, attr) for c in categories]
        vals = [v for v in vals if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")

    return MetricReport(
        o_auroc=mean("o_auroc"),
        p_auroc=mean("p_auroc"),
        o_aupr=mean("o_aupr"),
        p_aupr=mean("p_aupr"),
        seconds_per_object=mean("seconds_per_object"),
        categories=list(categories),
    )


def run_benchmark(
    categories: Sequence[CategorySpec],
    cfg: PipelineConfig = PipelineConfig(),
    workers: int = 1,
) -> MetricReport:
    """Generate, bank and evaluate each synthetic category in order."""
    reports = []
    for spec in categories:
        prototypes, tests = generate_category(spec)
        bank = build_memory_bank(prototypes, cfg, workers=workers)
        rep = evaluate_objects(bank, tests, None if cfg is None else replace(bank.pipeline_config, scoring=cfg.scoring),
                               name=spec.name, workers=workers)
        log.info("%s: %s", spec.name, rep.metrics())
        reports.append(rep)
    return summarize(reports)
