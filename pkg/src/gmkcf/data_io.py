"""Dataset loading, synthetic data and report persistence.

Dense files hold one sample per row and are transposed on load so that
``Dataset.X`` is ``d x n``. Sparse coordinate files use the header
``d n nnz`` followed by 1-based ``row col value`` lines, where rows index
features and columns index samples.
"""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class DataFormatError(ValueError):
    """Malformed input file; message carries the path and line number."""

    def __init__(self, path, line, message):
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True)
class Dataset:
    X: object
    truth: np.ndarray | None = None
    name: str = "dataset"
    class_count: int | None = None

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def with_labels(self, labels) -> "Dataset":
        labels = np.asarray(labels, dtype=int)
        if labels.shape != (self.n,):
            raise ValueError(f"expected {self.n} labels, got {labels.size}")
        return Dataset(self.X, labels, self.name, int(labels.max()) + 1)


@dataclass(frozen=True)
class SyntheticSpec:
    clusters: int = 3
    per_cluster: int = 100
    dim: int = 10
    separation: float = 10.0
    seed: int = 0
    nonnegative: bool = False

    def __post_init__(self):
        if self.clusters < 2 or self.per_cluster < 2 or self.dim < 1:
            raise ValueError("need clusters >= 2, per_cluster >= 2, dim >= 1")
        if not self.separation > 0:
            raise ValueError("separation must be positive")


_SPLIT = re.compile(r"[,\s]+")


def _tokens(line):
    return [t for t in _SPLIT.split(line.strip()) if t]


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_dense(path, name=None) -> Dataset:
    """Read comma- or whitespace-delimited numbers, one sample per row.

    A first line with no numeric token is taken as a header.
    """
    path = Path(path)
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = _tokens(line)
            if not toks:
                continue
            if lineno == 1 and not any(_is_number(t) for t in toks):
                continue
            try:
                vals = [float(t) for t in toks]
            except ValueError:
                raise DataFormatError(path, lineno, "non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataFormatError(path, lineno, "non-finite value")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataFormatError(path, lineno, f"expected {width} fields, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataFormatError(path, 0, "no data rows")
    X = np.array(rows, dtype=float).T
    return Dataset(X, name=name or path.stem)


def save_dense(path, X) -> None:
    """Write a ``d x n`` matrix as one sample per row, full precision."""
    X = X.toarray() if sp.issparse(X) else np.asarray(X)
    np.savetxt(path, X.T, fmt="%.17g", delimiter=",")


def load_sparse(path, name=None, densify=False) -> Dataset:
    path = Path(path)
    with open(path) as fh:
        lines = [(i, _tokens(l)) for i, l in enumerate(fh, start=1)]
    lines = [(i, t) for i, t in lines if t and not t[0].startswith("%")]
    if not lines:
        raise DataFormatError(path, 0, "empty file")
    lineno, head = lines[0]
    try:
        d, n, nnz = (int(t) for t in head)
    except ValueError:
        raise DataFormatError(path, lineno, "header must be 'd n nnz'") from None
    if d < 1 or n < 1 or nnz < 0:
        raise DataFormatError(path, lineno, "bad header dimensions")
    rows, cols, vals = [], [], []
    seen = set()
    for lineno, toks in lines[1:]:
        if len(toks) != 3:
            raise DataFormatError(path, lineno, "expected 'row col value'")
        try:
            r, c, v = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError:
            raise DataFormatError(path, lineno, "non-numeric field") from None
        if not (1 <= r <= d and 1 <= c <= n):
            raise DataFormatError(path, lineno, f"index ({r}, {c}) outside {d} x {n}")
        if not math.isfinite(v):
            raise DataFormatError(path, lineno, "non-finite value")
        if (r, c) in seen:
            raise DataFormatError(path, lineno, f"duplicate coordinate ({r}, {c})")
        seen.add((r, c))
        rows.append(r - 1)
        cols.append(c - 1)
        vals.append(v)
    if len(vals) != nnz:
        raise DataFormatError(path, 0, f"header declares {nnz} entries, found {len(vals)}")
    X = sp.csc_matrix((vals, (rows, cols)), shape=(d, n))
    if densify:
        X = X.toarray()
    return Dataset(X, name=name or path.stem)


def save_sparse(path, X) -> None:
    X = sp.coo_matrix(X)
    with open(path, "w") as fh:
        fh.write(f"{X.shape[0]} {X.shape[1]} {X.nnz}\n")
        for r, c, v in zip(X.row, X.col, X.data):
            fh.write(f"{r + 1} {c + 1} {float(v)!r}\n")


def load_labels(path, n) -> np.ndarray:
    """Map label tokens to contiguous ids in order of first appearance."""
    path = Path(path)
    with open(path) as fh:
        tokens = [line.strip() for line in fh]
    while tokens and not tokens[-1]:
        tokens.pop()
    if len(tokens) != n:
        raise DataFormatError(path, 0, f"expected {n} labels, found {len(tokens)}")
    ids = {}
    labels = np.empty(n, dtype=int)
    for i, tok in enumerate(tokens):
        if not tok:
            raise DataFormatError(path, i + 1, "blank label")
        labels[i] = ids.setdefault(tok, len(ids))
    return labels


def save_labels(path, labels) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


def _centroids(spec: SyntheticSpec, rng):
    k, dim, sep = spec.clusters, spec.dim, spec.separation
    if dim >= k:
        # scaled simplex vertices, randomly rotated: pairwise distance == sep
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return (sep / math.sqrt(2)) * Q[:, :k].T
    side = math.ceil(k ** (1 / dim))
    grid = itertools.islice(itertools.product(range(side), repeat=dim), k)
    return sep * np.array(list(grid), dtype=float)


def make_synthetic(spec: SyntheticSpec) -> Dataset:
    """Isotropic unit-variance Gaussian blobs with well separated centres."""
    rng = np.random.default_rng(spec.seed)
    C = _centroids(spec, rng)
    truth = np.repeat(np.arange(spec.clusters), spec.per_cluster)
    pts = C[truth] + rng.standard_normal((truth.size, spec.dim))
    if spec.nonnegative:
        pts = pts - pts.min()
    name = f"synthetic-{spec.clusters}x{spec.per_cluster}-d{spec.dim}-s{spec.separation:g}"
    return Dataset(pts.T.copy(), truth, name, spec.clusters)


def write_report(path, report: dict) -> None:
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())
