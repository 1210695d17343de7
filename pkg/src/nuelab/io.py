"""CSV and summary-record writers.

CSVs use ``,`` as separator, ``.`` as decimal mark and 12 significant digits,
so identical inputs produce byte-identical files.
"""
import csv
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.12g"


def fmt(v):
    """Render one CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return FLOAT_FORMAT % v
    return str(v)


def write_csv(path, header, rows):
    """Write ``rows`` (iterables of cells) under ``header``; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    """Return ``(header, columns)`` with numeric columns as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in body]
        try:
            cols[name] = np.asarray([float(v) for v in vals])
        except ValueError:
            cols[name] = vals
    return header, cols


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating, Fraction)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if v is None:
        return None
    return str(v)


def flatten(record, prefix=""):
    """Flatten nested dicts into dotted keys."""
    out = {}
    for k, v in record.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def emit_summary(results, path=None):
    """Flat JSON record of a pipeline result; written to ``path`` when given.

    An empty ``results`` yields ``{"status": "empty"}``.
    """
    rec = flatten(dict(results)) if results else {}
    rec = {k: _plain(v) for k, v in rec.items()}
    rec.setdefault("status", "empty" if not results else "ok")
    text = json.dumps(rec, indent=1, sort_keys=True)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
    return text
