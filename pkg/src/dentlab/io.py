"""JSON and CSV formats for clouds, maps and reports."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .exceptions import DomainError, OutputError
from .geometry import Metric, PointCloud, ScoredMap

__all__ = [
    "parse_cloud",
    "load_cloud",
    "cloud_to_dict",
    "dumps",
    "rows_to_csv",
    "write_text",
]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    """Deterministic JSON text (sorted keys, fixed separators, newline)."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def parse_cloud(text):
    """Parse the cloud format into a :class:`ScoredMap`.

    Points without ``"f"`` take the identity map. Malformed JSON raises a
    :class:`DomainError` naming the line and column.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DomainError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise DomainError("cloud JSON must be an object")
    dim = data.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise DomainError("'dim' must be a positive integer")
    pts = data.get("points")
    if not isinstance(pts, list) or not pts:
        raise DomainError("'points' must be a nonempty list")
    ids, X, F = [], [], []
    for k, p in enumerate(pts):
        if not isinstance(p, dict) or "x" not in p:
            raise DomainError(f"point {k} needs an 'x' entry")
        x = p["x"]
        if isinstance(x, (int, float)) and not isinstance(x, bool):
            x = [x]
        if not isinstance(x, list) or len(x) != dim:
            raise DomainError(f"point {k}: 'x' must have {dim} coordinates")
        X.append([float(c) for c in x])
        ids.append(str(p.get("id", f"p{k}")))
        fv = p.get("f")
        if isinstance(fv, (int, float)) and not isinstance(fv, bool):
            fv = [fv]
        F.append(fv)
    has = [fv is not None for fv in F]
    if any(has) and not all(has):
        raise DomainError("either every point or no point carries 'f'")
    cloud = PointCloud(np.array(X), tuple(ids))
    m = data.get("metric", {"kind": "lp", "p": 2})
    if not isinstance(m, dict) or m.get("kind") not in ("lp", "table"):
        raise DomainError("'metric' must be {'kind': 'lp', 'p': ...} or {'kind': 'table', 'rows': ...}")
    if m["kind"] == "lp":
        metric = Metric.lp(m.get("p", 2))
    else:
        metric = Metric.table(m.get("rows"))
    if all(has):
        lens = {len(fv) for fv in F}
        if len(lens) != 1:
            raise DomainError("all 'f' values must have the same length")
        values = np.array(F, dtype=float)
    elif metric.kind == "table":
        values = None
    else:
        return ScoredMap.identity(cloud, metric.p)
    return ScoredMap(cloud, values, metric)


def load_cloud(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise DomainError(f"cannot read {path}: {e.strerror}") from None
    return parse_cloud(text)


def cloud_to_dict(f):
    """Serialise a :class:`ScoredMap` (or bare cloud) in the cloud format."""
    if isinstance(f, PointCloud):
        f = ScoredMap.identity(f)
    pts = []
    for i, lab in enumerate(f.domain.labels):
        entry = {"id": lab, "x": f.domain.points[i].tolist()}
        if f.values is not None:
            entry["f"] = f.values[i].tolist()
        pts.append(entry)
    return {"dim": f.domain.dim, "points": pts, "metric": f.metric.as_dict()}


def rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(c) for c in r])
    return buf.getvalue()


def _csv_cell(c):
    if isinstance(c, (bool, np.bool_)):
        return int(c)
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    return c


def write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}") from None
