"""CSV and JSON helpers.

Datasets use a header ``[row_id,]x1,...,xd,y[,w]``. Floats are written with
``repr`` so values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .errors import DataError
from .source_fit import Dataset


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def csv_text(header, rows):
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def dataset_to_csv(data, path, include_weights=False, include_row_id=False):
    d = data.X.shape[1] if data.X.ndim == 2 else 0
    header = (["row_id"] if include_row_id else []) + [f"x{j + 1}" for j in range(d)] + ["y"]
    if include_weights:
        header.append("w")
    rows = []
    for i in range(data.n):
        row = ([data.row_id[i]] if include_row_id else []) + [float(v) for v in data.X[i]]
        row.append(int(data.y[i]) if data.y[i] in (0.0, 1.0) else float(data.y[i]))
        if include_weights:
            row.append(float(data.w[i]))
        rows.append(row)
    atomic_write_text(path, csv_text(header, rows))


def read_dataset_csv(path, require_labels=True):
    """Load a dataset CSV. Columns named ``x<k>`` are features, in ``k`` order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header required") from None
        feats = sorted(
            (h for h in header if h.startswith("x") and h[1:].isdigit()), key=lambda h: int(h[1:])
        )
        if not feats:
            raise DataError(f"{path}: no feature columns x1..xd in header")
        expected = [f"x{j + 1}" for j in range(len(feats))]
        if feats != expected:
            raise DataError(f"{path}: feature columns must be x1..x{len(feats)}")
        if require_labels and "y" not in header:
            raise DataError(f"{path}: missing label column 'y'")
        idx = {h: i for i, h in enumerate(header)}
        X, y, w, rid = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                X.append([float(row[idx[h]]) for h in feats])
                y.append(float(row[idx["y"]]) if "y" in idx else 0.0)
                if "w" in idx:
                    w.append(float(row[idx["w"]]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            rid.append(row[idx["row_id"]] if "row_id" in idx else str(len(rid)))
    X = np.asarray(X, dtype=float).reshape(len(X), len(feats))
    return Dataset(X, np.asarray(y), np.asarray(w) if "w" in idx else None, np.asarray(rid, dtype=object))
