"""Command-line interface.

Exit status: 0 success, 2 usage or configuration error, 3 data error,
4 registration failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import asdict, replace

from . import __version__
from .bank import build_memory_bank, derive_seed, load_bank, save_bank
from .benchmark import CategorySpec, TestObject, evaluate_objects, generate_category, summarize
from .config import load_config
from .errors import ConfigError, DataError, InvalidParams, NoCorrespondences, PointCoreError, RegistrationFailed
from .io import (
    label_path,
    parse_feature_file,
    parse_point_cloud,
    read_labels,
    write_heatmap_ply,
    write_labels,
    write_point_cloud,
    write_scores,
)
from .scoring import run_inference
from .synthetic import DefectLabeling

log = logging.getLogger("pointcore")

CLOUD_EXTS = (".ply", ".xyz")
FEATURE_EXT = ".features"


def _cloud_files(spec):
    """Files named directly, or every cloud file of a directory in name order."""
    out = []
    for item in spec:
        if os.path.isdir(item):
            out += sorted(p for p in glob.glob(os.path.join(item, "*")) if p.lower().endswith(CLOUD_EXTS))
        else:
            out.append(item)
    if not out:
        raise DataError("no point cloud files found")
    return out


def _features_for(files, features_dir):
    if features_dir is None:
        return None
    feats = []
    for f in files:
        stem = os.path.splitext(os.path.basename(f))[0]
        feats.append(parse_feature_file(os.path.join(features_dir, stem + FEATURE_EXT)))
    return feats


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_build_bank(args) -> int:
    files = _cloud_files(args.prototypes)
    clouds = [parse_point_cloud(f) for f in files]
    feats = _features_for(files, args.features_dir)
    cfg = _config(args)
    if feats is not None and cfg.extractor.kind != "external-file":
        cfg = replace(cfg, extractor=replace(cfg.extractor, kind="external-file", fpfh_radius=None))
    bank = build_memory_bank(clouds, cfg, features=feats, workers=args.threads)
    save_bank(bank, args.out)
    for s in bank.skipped:
        print(f"skipped prototype {files[s['prototype']]}: {s['reason']}", file=sys.stderr)
    print(f"bank: {len(bank)} elements from {len(files) - len(bank.skipped)} prototypes -> {args.out}")
    return 0


def cmd_infer(args) -> int:
    bank = load_bank(args.bank)
    cloud = parse_point_cloud(args.input)
    feats = parse_feature_file(args.features) if args.features else None
    cfg = _config(args) if (args.config or args.seed is not None) else None
    scores = run_inference(bank, cloud, cfg, features=feats, workers=args.threads)
    write_scores(scores, args.scores)
    if args.heatmap:
        write_heatmap_ply(cloud, scores.fused, args.heatmap)
    print(f"object_score={scores.object_score!r}")
    return 0


def _test_objects(test_dir):
    objs = []
    for f in _cloud_files([test_dir]):
        cloud = parse_point_cloud(f)
        lab = label_path(f)
        if not os.path.exists(lab):
            raise DataError(f"missing label file {lab}")
        labels, obj = read_labels(lab, len(cloud))
        name = os.path.splitext(os.path.basename(f))[0]
        objs.append(TestObject(name, cloud, DefectLabeling(labels, obj, {})))
    return objs


def cmd_evaluate(args) -> int:
    bank = load_bank(args.bank)
    tests = _test_objects(args.test_dir)
    feats = None
    if args.features_dir:
        feats = [parse_feature_file(os.path.join(args.features_dir, t.name + FEATURE_EXT)) for t in tests]
    cfg = _config(args) if (args.config or args.seed is not None) else None
    rep = evaluate_objects(bank, tests, cfg, name=os.path.basename(os.path.normpath(args.test_dir)),
                           features=feats, workers=args.threads)
    summary = summarize([rep])
    _write_json(summary.to_dict(timing=False), args.report)
    # wall-clock numbers go to a sidecar so the report itself stays reproducible
    _write_json(
        {"seconds_per_object": rep.seconds_per_object,
         "objects": {r.name: r.seconds for r in rep.results}},
        args.report + ".timing.json",
    )
    if args.scores_dir:
        os.makedirs(args.scores_dir, exist_ok=True)
        for r in rep.results:
            write_scores(r.scores, os.path.join(args.scores_dir, r.name + ".csv"))
    print(json.dumps(rep.metrics(), sort_keys=True))
    return 0


def _category_specs(path, seed):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cats = data.get("categories") if isinstance(data, dict) else data
    if not isinstance(cats, list) or not cats:
        raise ConfigError(f"{path}: expected a non-empty list of categories")
    specs = []
    known = set(CategorySpec.__dataclass_fields__)
    for i, c in enumerate(cats):
        if not isinstance(c, dict) or "name" not in c:
            raise ConfigError(f"{path}: category {i} needs a name")
        unknown = sorted(set(c) - known)
        if unknown:
            raise ConfigError(f"{path}: category {i}: unknown key(s) {', '.join(unknown)}")
        try:
            spec = CategorySpec(**c)
        except (TypeError, InvalidParams) as exc:
            raise ConfigError(f"{path}: category {i}: {exc}") from exc
        if seed is not None:
            spec = replace(spec, seed=derive_seed(seed, i))
        specs.append(spec)
    return specs


def cmd_gen_synthetic(args) -> int:
    specs = _category_specs(args.spec, args.seed)
    for spec in specs:
        root = os.path.join(args.out_dir, spec.name)
        pdir, tdir = os.path.join(root, "prototypes"), os.path.join(root, "test")
        os.makedirs(pdir, exist_ok=True)
        os.makedirs(tdir, exist_ok=True)
        prototypes, tests = generate_category(spec)
        for i, c in enumerate(prototypes):
            write_point_cloud(c, os.path.join(pdir, f"proto_{i:02d}.ply"))
        for t in tests:
            f = os.path.join(tdir, t.name + ".ply")
            write_point_cloud(t.cloud, f)
            write_labels(t.labels, label_path(f))
        _write_json(asdict(spec), os.path.join(root, "category.json"))
        print(f"{spec.name}: {len(prototypes)} prototypes, {len(tests)} tests -> {root}")
    return 0


def cmd_bench_registration(args) -> int:
    from .regbench import registration_ablation

    table = registration_ablation(n_seeds=args.seeds, n_trials=args.trials, n_points=args.points,
                                  seed=args.seed or 0, workers=args.threads)
    text = table.format()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pointcore", description="Point-cloud anomaly detection with a single memory bank.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    common.add_argument("--seed", type=int, default=None, help="override every seed")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-bank", parents=[common], help="build a memory bank from prototypes")
    b.add_argument("--prototypes", nargs="+", required=True, help="directory or cloud files")
    b.add_argument("--config", default=None)
    b.add_argument("--out", required=True)
    b.add_argument("--features-dir", default=None, help=f"per-prototype <name>{FEATURE_EXT} files")
    b.set_defaults(func=cmd_build_bank)

    i = sub.add_parser("infer", parents=[common], help="score one cloud")
    i.add_argument("--bank", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--config", default=None)
    i.add_argument("--scores", required=True)
    i.add_argument("--heatmap", default=None)
    i.add_argument("--features", default=None)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("evaluate", parents=[common], help="score a labeled test directory")
    e.add_argument("--bank", required=True)
    e.add_argument("--test-dir", required=True)
    e.add_argument("--config", default=None)
    e.add_argument("--report", required=True)
    e.add_argument("--features-dir", default=None)
    e.add_argument("--scores-dir", default=None)
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("gen-synthetic", parents=[common], help="write synthetic categories")
    g.add_argument("--spec", required=True)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen_synthetic)

    r = sub.add_parser("bench-registration", parents=[common], help="registration ablation table")
    r.add_argument("--seeds", type=int, default=20)
    r.add_argument("--trials", type=int, default=50, help="point-plane vs point-point trials")
    r.add_argument("--points", type=int, default=2000)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_bench_registration)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (RegistrationFailed, NoCorrespondences)):
        return 4
    if isinstance(exc, (ConfigError, InvalidParams)):
        return 2
    return 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (PointCoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
