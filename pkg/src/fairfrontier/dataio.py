"""
File formats: prediction matrices, model metrics, frontier reports, SVG plots.

Prediction matrix (CSV): ``row_id``, ``y``, one or more ``attr:<name>`` 0/1
columns, one or more ``model:<name>`` score columns, optional ``split`` in
{train, ensemble, test}.  Without ``split`` rows are assigned 50/25/25 by a
seeded shuffle.

Model metrics (CSV): ``id``, ``fairness``, ``accuracy``.

Reals are written with ``repr`` so they round-trip exactly and never depend on
the locale.
"""

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fairfrontier import __version__
from fairfrontier.errors import ValidationError
from fairfrontier.frontier import ModelRecord, TafCurve, pareto_filter
from fairfrontier.metrics import EvaluationSet, GroupAssignment

SPLITS = ("train", "ensemble", "test")
ATTR_PREFIX = "attr:"
MODEL_PREFIX = "model:"


@dataclass(frozen=True)
class Split:
    eval: EvaluationSet
    H: np.ndarray
    row_ids: tuple


@dataclass(frozen=True)
class PredictionMatrix:
    splits: dict
    model_ids: tuple
    attributes: tuple


def fmt(x):
    """Shortest round-trip text for a real."""
    return repr(float(x))


def _number(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise ValidationError(f"row {row}, column {col}: {text!r} is not a number") from None
    if not math.isfinite(v):
        raise ValidationError(f"row {row}, column {col}: non-finite value {text!r}")
    return v


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror}") from None
    if not header:
        raise ValidationError(f"{path}: missing header")
    header = [h.strip() for h in header]
    for i, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise ValidationError(f"row {i}: expected {len(header)} fields, got {len(r)}")
    return header, rows


def assign_splits(n, seed):
    """Deterministic 50/25/25 train/ensemble/test labels for ``n`` rows."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train, n_ens = n // 2, n // 4
    labels = np.empty(n, dtype=object)
    labels[perm[:n_train]] = "train"
    labels[perm[n_train:n_train + n_ens]] = "ensemble"
    labels[perm[n_train + n_ens:]] = "test"
    return labels.tolist()


def parse_prediction_matrix(path, seed=0):
    header, rows = _read_rows(path)
    for req in ("row_id", "y"):
        if req not in header:
            raise ValidationError(f"{path}: missing required column {req!r}")
    attrs = [h for h in header if h.startswith(ATTR_PREFIX)]
    models = [h for h in header if h.startswith(MODEL_PREFIX)]
    if not attrs:
        raise ValidationError(f"{path}: need at least one '{ATTR_PREFIX}' column")
    if not models:
        raise ValidationError(f"{path}: need at least one '{MODEL_PREFIX}' column")
    col = {h: j for j, h in enumerate(header)}
    n = len(rows)
    if n == 0:
        raise ValidationError(f"{path}: no data rows")

    y = np.empty(n)
    A = np.empty((n, len(attrs)), dtype=np.int8)
    H = np.empty((n, len(models)))
    for i, r in enumerate(rows):
        rownum = i + 1
        y[i] = _number(r[col["y"]], rownum, "y")
        for j, a in enumerate(attrs):
            text = r[col[a]].strip()
            if text not in ("0", "1"):
                raise ValidationError(f"row {rownum}, column {a}: value {text!r} is not 0/1")
            A[i, j] = int(text)
        for j, m in enumerate(models):
            H[i, j] = _number(r[col[m]], rownum, m)

    if "split" in col:
        labels = []
        for i, r in enumerate(rows):
            s = r[col["split"]].strip()
            if s not in SPLITS:
                raise ValidationError(
                    f"row {i + 1}, column split: {s!r} not one of {SPLITS}"
                )
            labels.append(s)
    else:
        labels = assign_splits(n, seed)

    row_ids = [r[col["row_id"]] for r in rows]
    names = [a[len(ATTR_PREFIX):] for a in attrs]
    labels = np.array(labels)
    splits = {}
    for s in SPLITS:
        idx = np.flatnonzero(labels == s)
        if idx.size < 2:
            raise ValidationError(f"{path}: split {s!r} has {idx.size} rows (need >= 2)")
        groups = {nm: GroupAssignment(A[idx, j], nm) for j, nm in enumerate(names)}
        splits[s] = Split(EvaluationSet(y[idx], groups), H[idx], tuple(row_ids[i] for i in idx))
    return PredictionMatrix(splits, tuple(m[len(MODEL_PREFIX):] for m in models), tuple(names))


def write_prediction_matrix(path, row_ids, y, attributes, scores, model_ids, splits=None):
    """Write a prediction matrix; ``attributes`` maps names to 0/1 arrays."""
    header = ["row_id", "y"] + [ATTR_PREFIX + a for a in attributes]
    header += [MODEL_PREFIX + m for m in model_ids]
    if splits is not None:
        header.append("split")
    scores = np.asarray(scores, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, rid in enumerate(row_ids):
        row = [rid, fmt(y[i])] + [str(int(v[i])) for v in attributes.values()]
        row += [fmt(v) for v in scores[i]]
        if splits is not None:
            row.append(splits[i])
        w.writerow(row)
    _write_text(path, buf.getvalue())


def parse_model_metrics(path):
    header, rows = _read_rows(path)
    for req in ("id", "fairness", "accuracy"):
        if req not in header:
            raise ValidationError(f"{path}: missing required column {req!r}")
    if not rows:
        raise ValidationError(f"{path}: no models")
    col = {h: j for j, h in enumerate(header)}
    seen = set()
    records = []
    for i, r in enumerate(rows, start=1):
        mid = r[col["id"]]
        if mid in seen:
            raise ValidationError(f"row {i}, column id: duplicate model id {mid!r}")
        seen.add(mid)
        f = _number(r[col["fairness"]], i, "fairness")
        a = _number(r[col["accuracy"]], i, "accuracy")
        for name, v in (("fairness", f), ("accuracy", a)):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"row {i}, column {name}: {v!r} outside [0, 1]")
        records.append(ModelRecord(mid, f, a))
    return records


def write_model_metrics(path, records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "fairness", "accuracy"])
    for r in records:
        w.writerow([r.id, fmt(r.fairness), fmt(r.accuracy)])
    _write_text(path, buf.getvalue())


def _write_text(path, text):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as e:
        raise ValidationError(f"cannot write {path}: {e.strerror}") from None


def digest(paths):
    """SHA-256 over the bytes of the given files, in order."""
    h = hashlib.sha256()
    for p in paths:
        data = Path(p).read_bytes()
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    return h.hexdigest()


def write_frontier_report(out_dir, records, curve, tafi, scores, settings=None,
                          input_paths=(), timestamp=None):
    """Write ``taf_points.csv`` and ``report.json`` into ``out_dir``.

    ``scores`` is a list of ``(WeightFunction, fauc, fauci)``.  Returns the
    two paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot create {out}: {e.strerror}") from None
    on_curve = set(curve.source_ids)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "fairness", "accuracy", "pareto"])
    for r in records:
        w.writerow([r.id, fmt(r.fairness), fmt(r.accuracy), int(r.id in on_curve)])
    points_path = out / "taf_points.csv"
    _write_text(points_path, buf.getvalue())

    report = {
        "software_version": __version__,
        "input_digest": digest(input_paths) if input_paths else None,
        "n_models": len(records),
        "n_pareto": len(curve),
        "taf_points": [[r, a] for r, a in curve.points],
        "tafi_vertices": [[f, a] for f, a in tafi.vertices],
        "weights": [
            {"name": wf.name, "kind": wf.kind, "alpha": wf.alpha, "beta": wf.beta,
             "fauc": fa, "fauci": fi}
            for wf, fa, fi in scores
        ],
        "settings": settings or {},
    }
    if timestamp is not None:
        report["timestamp"] = timestamp
    report_path = out / "report.json"
    _write_text(report_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return points_path, report_path


def read_taf_points(path):
    """Rebuild the TAF curve from the Pareto rows of ``taf_points.csv``."""
    header, rows = _read_rows(path)
    if "pareto" not in header:
        raise ValidationError(f"{path}: missing required column 'pareto'")
    col = {h: j for j, h in enumerate(header)}
    recs = []
    for i, r in enumerate(rows, start=1):
        if r[col["pareto"]].strip() == "1":
            recs.append(ModelRecord(r[col["id"]], _number(r[col["fairness"]], i, "fairness"),
                                    _number(r[col["accuracy"]], i, "accuracy")))
    if not recs:
        raise ValidationError(f"{path}: no Pareto rows")
    return pareto_filter(recs)


# -- SVG ---------------------------------------------------------------------

_PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
            "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
_W, _H = 480, 400
_L, _R, _T, _B = 56, 150, 20, 48


def _xy(f, a):
    x = _L + f * (_W - _L - _R)
    y = _T + (1.0 - a) * (_H - _T - _B)
    return f"{x:.3f},{y:.3f}"


def _taf_polyline(curve):
    # from fairness 0 rightwards: horizontal at each level, then drop at its knot
    f = curve.fairness[::-1].tolist()
    a = curve.accuracy[::-1].tolist()
    pts = [(0.0, a[0])]
    for i, (fi, ai) in enumerate(zip(f, a)):
        pts.append((fi, ai))
        if i + 1 < len(f):
            pts.append((fi, a[i + 1]))
    if pts[-1][0] < 1.0:
        pts.append((1.0, pts[-1][1]))
    return pts


def render_svg(curves, path, title=None):
    """Plot named TAF (step) and TAFI (straight) curves on the unit square.

    ``curves`` is a sequence of ``(name, TafCurve | TafiCurve)``.  Output is a
    pure function of the inputs.
    """
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    x0, x1 = _L, _W - _R
    y0, y1 = _T, _H - _B
    parts.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
                 'fill="none" stroke="black"/>')
    for t in range(6):
        v = t / 5
        xy = _xy(v, 0.0).split(",")
        parts.append(f'<text x="{xy[0]}" y="{y1 + 14}" text-anchor="middle">{v:.1f}</text>')
        xy = _xy(0.0, v).split(",")
        parts.append(f'<text x="{x0 - 6}" y="{float(xy[1]) + 4:.3f}" '
                     f'text-anchor="end">{v:.1f}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2}" y="{_H - 12}" text-anchor="middle">Fairness</text>')
    parts.append(f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {(y0 + y1) / 2})">Accuracy</text>')
    if title:
        parts.append(f'<text x="{(x0 + x1) / 2}" y="14" text-anchor="middle">'
                     f'{_escape(title)}</text>')

    for i, (name, c) in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        if isinstance(c, TafCurve):
            pts, dash = _taf_polyline(c), ""
        else:
            pts, dash = c.vertices, ' stroke-dasharray="5,3"'
        coords = " ".join(_xy(f, a) for f, a in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"{dash}/>')
        ly = _T + 14 + 18 * i
        parts.append(f'<line x1="{x1 + 10}" y1="{ly}" x2="{x1 + 30}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="1.5"{dash}/>')
        parts.append(f'<text x="{x1 + 35}" y="{ly + 4}">{_escape(name)}</text>')
    parts.append("</svg>")
    _write_text(path, "\n".join(parts) + "\n")


def _escape(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
