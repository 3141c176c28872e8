"""Reading and writing the on-disk formats.

Sample CSV
    Optional header row, then one observation per row, comma separated.
    Written with a header ``x0,...,x{p-1}`` and ``%.17g`` values so that
    reruns are byte-identical.
Matrix CSV
    p rows of p comma-separated values, no header.
Matrix JSON
    ``{"kind": ..., "dim": p, "entries": [[...], ...]}``.
Variogram
    Matrix CSV plus a metadata JSON ``{n, k, p, exponent_or_threshold, valid_flag}``.
"""

import csv
import json
import os
import tempfile

import numpy as np

from .errors import IngestionError

FLOAT_FMT = "%.17g"


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_samples(path):
    """Read an n x p sample CSV; malformed input raises IngestionError naming the line."""
    rows = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row):
                width = len(row)
                continue
            if width is None:
                width = len(row)
            if len(row) != width:
                raise IngestionError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_number(c))
                raise IngestionError(f"{path}: line {lineno}: cannot parse {bad!r} as a number")
            if not all(np.isfinite(vals)):
                raise IngestionError(f"{path}: line {lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_samples(path, X):
    X = np.asarray(X, dtype=float)
    lines = [",".join(f"x{i}" for i in range(X.shape[1]))]
    lines += [",".join(FLOAT_FMT % v for v in row) for row in X]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_matrix_csv(path, A):
    A = np.asarray(A, dtype=float)
    _atomic_write(path, "\n".join(",".join(FLOAT_FMT % v for v in row) for row in A) + "\n")


def read_matrix_csv(path):
    A = read_samples(path)
    if A.shape[0] != A.shape[1]:
        raise IngestionError(f"{path}: expected a square matrix, got {A.shape}")
    return A


def matrix_envelope(A, kind):
    A = np.asarray(A, dtype=float)
    return {"kind": kind, "dim": int(A.shape[0]), "entries": A.tolist()}


def matrix_from_envelope(d):
    A = np.asarray(d["entries"], dtype=float)
    if A.shape != (d["dim"], d["dim"]):
        raise IngestionError(f"matrix envelope dim {d['dim']} does not match entries {A.shape}")
    return A


def write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=False, default=_default) + "\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_variogram(prefix, ev):
    """Write ``<prefix>.csv`` (the matrix) and ``<prefix>.json`` (metadata)."""
    write_matrix_csv(prefix + ".csv", ev.gamma_hat)
    write_json(prefix + ".json", ev.metadata())
