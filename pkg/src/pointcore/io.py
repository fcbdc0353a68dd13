"""Text formats for clouds, features, scores, labels and heatmaps.

Everything here is ASCII and written with 17 significant digits, so writing a
file twice yields identical bytes and parsing gives back the exact doubles.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from typing import Optional

import numpy as np

from .errors import CountMismatch, ParseError, UnsupportedFormat
from .geometry import PointCloud

log = logging.getLogger(__name__)

NORMAL_TOLERANCE = 1e-3
SCORE_COLUMNS = ("index", "raw_coord", "raw_feat", "norm_coord", "norm_feat", "fused")


def _fmt(x: float) -> str:
    return "%.17g" % x


def _floats(tokens, path, line):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"non-numeric value in {' '.join(tokens)!r}", path, line) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite value", path, line)
    return vals


def _fix_normals(normals: np.ndarray, path) -> np.ndarray:
    norms = np.linalg.norm(normals, axis=1)
    off = np.abs(norms - 1.0) > NORMAL_TOLERANCE
    if off.any():
        if np.any(norms[off] == 0):
            raise ParseError("zero-length normal", path)
        warnings.warn(f"{path}: {int(off.sum())} normals were not unit length; renormalized")
        normals = normals.copy()
        normals[off] /= norms[off, None]
    return normals


def _parse_ply(path, lines):
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", path, 1)
    fmt = None
    n_vertex = None
    props = []
    in_vertex = False
    end = None
    for i, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok:
            continue
        key = tok[0]
        if key == "format":
            fmt = tok[1] if len(tok) > 1 else ""
            if fmt != "ascii":
                raise UnsupportedFormat(f"{path}: PLY format {fmt!r} is not supported (ASCII only)")
        elif key == "element":
            if len(tok) != 3:
                raise ParseError("malformed element line", path, i)
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                try:
                    n_vertex = int(tok[2])
                except ValueError:
                    raise ParseError("bad vertex count", path, i) from None
        elif key == "property" and in_vertex:
            if len(tok) < 3 or tok[1] == "list":
                raise ParseError("unsupported vertex property", path, i)
            props.append(tok[-1])
        elif key == "end_header":
            end = i
            break
    if fmt is None:
        raise ParseError("missing format line", path)
    if end is None:
        raise ParseError("missing end_header", path)
    if n_vertex is None:
        raise ParseError("no vertex element", path)
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z", path) from None
    ncols = [props.index(c) for c in ("nx", "ny", "nz")] if {"nx", "ny", "nz"} <= set(props) else None

    rows = []
    line_no = end
    for raw in lines[end:]:
        line_no += 1
        if len(rows) == n_vertex:
            break
        tok = raw.split()
        if not tok:
            continue
        if len(tok) < len(props):
            raise ParseError(f"expected {len(props)} values, got {len(tok)}", path, line_no)
        rows.append(_floats(tok[: len(props)], path, line_no))
    if len(rows) != n_vertex:
        raise ParseError(f"header declares {n_vertex} vertices, found {len(rows)}", path, line_no)
    data = np.array(rows, dtype=np.float64).reshape(n_vertex, len(props))
    normals = None if ncols is None else _fix_normals(data[:, ncols], path)
    return PointCloud(data[:, cols], normals)


def _parse_xyz(path, lines):
    rows = []
    for i, raw in enumerate(lines, start=1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        tok = s.split()
        if len(tok) != 3:
            raise ParseError(f"expected 3 values 'x y z', got {len(tok)}: {raw.strip()!r}", path, i)
        rows.append(_floats(tok, path, i))
    if not rows:
        raise ParseError("no points", path)
    return PointCloud(np.array(rows, dtype=np.float64))


def parse_point_cloud(path) -> PointCloud:
    """Read an ASCII PLY or XYZ text cloud, preserving point order.

    PLY is detected by its magic line; anything else is read as XYZ.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
        data = head + fh.read()
    if head.startswith(b"ply"):
        header_end = data.find(b"end_header")
        header = data[: header_end if header_end >= 0 else len(data)]
        if b"binary" in header:
            raise UnsupportedFormat(f"{path}: binary PLY is not supported (ASCII only)")
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise UnsupportedFormat(f"{path}: not an ASCII text file") from None
    lines = text.splitlines()
    if head.startswith(b"ply"):
        return _parse_ply(path, lines)
    return _parse_xyz(path, lines)


def write_point_cloud(cloud: PointCloud, path) -> None:
    """ASCII PLY for ``.ply`` paths, XYZ text otherwise."""
    pts = cloud.points
    if str(path).lower().endswith(".ply"):
        props = ["x", "y", "z"] + (["nx", "ny", "nz"] if cloud.has_normals else [])
        data = pts if not cloud.has_normals else np.hstack([pts, cloud.normals])
        head = ["ply", "format ascii 1.0", f"element vertex {len(pts)}"]
        head += [f"property double {p}" for p in props] + ["end_header"]
        body = [" ".join(_fmt(v) for v in row) for row in data]
        _write_lines(path, head + body)
    else:
        _write_lines(path, [" ".join(_fmt(v) for v in row) for row in pts])


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def parse_feature_file(path) -> np.ndarray:
    """``N D`` header then ``N`` rows of ``D`` finite numbers."""
    with open(path, encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    entries = [(i, ln.split()) for i, ln in enumerate(lines, start=1) if ln.strip()]
    if not entries:
        raise ParseError("empty feature file", path, 1)
    i0, head = entries[0]
    try:
        if len(head) != 2:
            raise ValueError
        n, d = int(head[0]), int(head[1])
        if n < 0 or d < 1:
            raise ValueError
    except ValueError:
        raise ParseError("header must be 'N D' with N >= 0, D >= 1", path, i0) from None
    rows = entries[1:]
    if len(rows) < n:
        raise ParseError(f"truncated: header declares {n} rows, found {len(rows)}", path, len(lines))
    if len(rows) > n:
        raise ParseError(f"header declares {n} rows, found {len(rows)}", path, rows[n][0])
    out = np.empty((n, d))
    for r, (i, tok) in enumerate(rows):
        if len(tok) != d:
            raise ParseError(f"expected {d} values, got {len(tok)}", path, i)
        out[r] = _floats(tok, path, i)
    return out


def write_feature_file(features, path) -> None:
    F = np.asarray(features, dtype=np.float64)
    _write_lines(path, [f"{F.shape[0]} {F.shape[1]}"] + [" ".join(_fmt(v) for v in row) for row in F])


def bind_features(features: np.ndarray, cloud: PointCloud) -> np.ndarray:
    if len(features) != len(cloud):
        raise CountMismatch(f"feature file has {len(features)} rows, cloud has {len(cloud)} points")
    return features


def write_scores(scores, path) -> None:
    """CSV of the per-point scores plus an ``# object_score=`` trailer."""
    cols = [scores.raw_coord, scores.raw_feat, scores.norm_coord, scores.norm_feat, scores.fused]
    n = len(scores.fused)
    if any(len(c) != n for c in cols):
        raise CountMismatch("score arrays differ in length")
    lines = [",".join(SCORE_COLUMNS)]
    stacked = np.column_stack(cols)
    lines += [f"{i}," + ",".join(_fmt(v) for v in row) for i, row in enumerate(stacked)]
    lines.append(f"# object_score={_fmt(scores.object_score)}")
    _write_lines(path, lines)


def read_scores(path):
    """Parse a scores CSV; returns ``(columns dict, object_score)``."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != ",".join(SCORE_COLUMNS):
        raise ParseError("bad scores header", path, 1)
    rows, obj = [], None
    for i, ln in enumerate(lines[1:], start=2):
        if ln.startswith("# object_score="):
            obj = float(ln.split("=", 1)[1])
            continue
        tok = ln.split(",")
        if len(tok) != len(SCORE_COLUMNS):
            raise ParseError("wrong column count", path, i)
        rows.append(_floats(tok, path, i))
    data = np.array(rows, dtype=np.float64).reshape(-1, len(SCORE_COLUMNS))
    cols = {name: data[:, j] for j, name in enumerate(SCORE_COLUMNS)}
    cols["index"] = cols["index"].astype(np.intp)
    return cols, obj


def heatmap_colors(fused) -> np.ndarray:
    """RGB in 0..255, blue at the minimum score and red at the maximum."""
    s = np.asarray(fused, dtype=np.float64)
    lo, hi = s.min(), s.max()
    t = np.full(len(s), 0.5) if hi == lo else (s - lo) / (hi - lo)
    red = np.array([255.0, 0.0, 0.0])
    blue = np.array([0.0, 0.0, 255.0])
    rgb = blue + t[:, None] * (red - blue)
    return np.rint(rgb).astype(np.uint8)


def write_heatmap_ply(cloud: PointCloud, fused, path) -> None:
    s = np.asarray(fused, dtype=np.float64)
    if len(s) != len(cloud):
        raise CountMismatch(f"{len(s)} scores for {len(cloud)} points")
    rgb = heatmap_colors(s)
    head = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property double score",
        "end_header",
    ]
    body = [
        " ".join(_fmt(v) for v in p) + " %d %d %d " % tuple(c) + _fmt(v)
        for p, c, v in zip(cloud.points, rgb, s)
    ]
    _write_lines(path, head + body)


def label_path(cloud_path) -> str:
    """Sidecar label file next to a cloud: ``name.ply`` -> ``name.labels``."""
    root, _ = os.path.splitext(str(cloud_path))
    return root + ".labels"


def write_labels(labeling, path) -> None:
    lines = [f"# object_label={int(labeling.object_label)}"]
    lines += [str(int(v)) for v in labeling.point_labels]
    _write_lines(path, lines)


def read_labels(path, n_points: Optional[int] = None):
    """Returns ``(point_labels, object_label)``."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# object_label="):
        raise ParseError("first line must be '# object_label=<0|1>'", path, 1)
    try:
        obj = int(lines[0].split("=", 1)[1])
    except ValueError:
        raise ParseError("bad object label", path, 1) from None
    if obj not in (0, 1):
        raise ParseError("object label must be 0 or 1", path, 1)
    labels = []
    for i, ln in enumerate(lines[1:], start=2):
        s = ln.strip()
        if not s:
            continue
        if s not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {s!r}", path, i)
        labels.append(int(s))
    labels = np.array(labels, dtype=np.int8)
    if n_points is not None and len(labels) != n_points:
        raise CountMismatch(f"{path}: {len(labels)} labels for {n_points} points")
    if obj != int(labels.any()):
        raise ParseError("object label disagrees with point labels", path, 1)
    return labels, obj
