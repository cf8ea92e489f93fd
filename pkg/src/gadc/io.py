"""File formats: feature matrices, labels, splits and sparse triplet dumps.

The binary matrix container is ``b"GADCMAT1"`` followed by little-endian
u64 rows, u64 cols, then rows*cols little-endian float64 values, row-major.
"""
from __future__ import annotations

import csv
import io
import json
import os
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .graph import Graph, load_graph

MAGIC = b"GADCMAT1"
_HEADER = struct.Struct("<8sQQ")


def write_matrix(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(np.asarray(x, dtype="<f8"))
    if x.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {x.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, x.shape[0], x.shape[1]))
        fh.write(x.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    """Read a GADCMAT1 file, or a header-free CSV if the magic is absent."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if head[:8] != MAGIC:
            return read_csv_matrix(path)
        if len(head) < _HEADER.size:
            raise InputError(f"{path}: truncated header at offset {len(head)}")
        _, n, d = _HEADER.unpack(head)
        body = fh.read()
    expected = n * d * 8
    if len(body) != expected:
        raise InputError(
            f"{path}: payload is {len(body)} bytes at offset {_HEADER.size}, expected {expected} for {n}x{d}"
        )
    x = np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)
    _check_finite(x, path)
    return x


def read_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise InputError(f"{path}: line {lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    x = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1 if rows else 0)
    _check_finite(x, path)
    return x


def _check_finite(x, path):
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        i, j = bad[0]
        raise InputError(f"{path}: non-finite value at row {i}, column {j}")


def write_csv_matrix(path, x: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(x):
            w.writerow([repr(float(v)) for v in row])


def read_labels(path, n: int | None = None) -> np.ndarray:
    """``node_id,label`` CSV; an optional header row is skipped."""
    pairs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                pairs.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                if lineno == 1 and not pairs:
                    continue
                raise InputError(f"{path}: line {lineno}: expected node_id,label") from None
    size = n if n is not None else (max(p[0] for p in pairs) + 1 if pairs else 0)
    labels = np.full(size, -1, dtype=np.int64)
    for node, lab in pairs:
        if not 0 <= node < size:
            raise InputError(f"{path}: node id {node} out of range [0, {size})")
        labels[node] = lab
    if (labels < 0).any():
        raise InputError(f"{path}: {int((labels < 0).sum())} nodes have no label")
    return labels


def write_labels(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("node_id,label\n")
        for i, lab in enumerate(np.asarray(labels)):
            fh.write(f"{i},{int(lab)}\n")


def read_splits(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc}") from None
    try:
        return {k: np.asarray(raw[k], dtype=np.int64) for k in ("train", "val", "test")}
    except KeyError as exc:
        raise InputError(f"{path}: missing split {exc}") from None


def write_splits(path, train, val, test) -> None:
    with open(path, "w") as fh:
        json.dump({"train": [int(i) for i in train], "val": [int(i) for i in val], "test": [int(i) for i in test]}, fh)


def read_graph(path, n: int) -> Graph:
    with open(path, encoding="utf-8") as fh:
        try:
            return load_graph(fh, n)
        except InputError as exc:
            raise InputError(f"{path}: {exc}") from None


def write_triplets(path, m) -> None:
    """Sparse (row,col,value) CSV for inspection."""
    coo = sp.coo_matrix(m)
    order = np.lexsort((coo.col, coo.row))
    buf = io.StringIO()
    buf.write("row,col,value\n")
    for k in order:
        buf.write(f"{int(coo.row[k])},{int(coo.col[k])},{float(coo.data[k])!r}\n")
    Path(path).write_text(buf.getvalue())


def read_triplets(path, n: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            rows.append(int(row[0]))
            cols.append(int(row[1]))
            vals.append(float(row[2]))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
