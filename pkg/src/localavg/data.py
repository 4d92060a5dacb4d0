"""LIBSVM-format datasets and their split across nodes."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .objectives import LeastSquaresProblem


class LibSVMParseError(ValueError):
    """Malformed LIBSVM input. ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.reason = message
        self.line = line
        self.column = column


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SparseRow:
    label: float
    indices: tuple = ()
    values: tuple = ()


@dataclass(frozen=True)
class SparseDataset:
    rows: tuple
    max_feature_index: int

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def to_dense(self, n_features: int | None = None, rows=None) -> tuple:
        """Design matrix and label vector, feature ``j`` in column ``j - 1``."""
        d = self.max_feature_index if n_features is None else n_features
        if d < self.max_feature_index:
            raise DimensionError(f"target dimension {d} is below max feature index {self.max_feature_index}")
        picked = self.rows if rows is None else [self.rows[i] for i in rows]
        A = np.zeros((len(picked), d))
        b = np.empty(len(picked))
        for k, row in enumerate(picked):
            b[k] = row.label
            if row.indices:
                A[k, np.asarray(row.indices) - 1] = row.values
        return A, b

    @classmethod
    def from_dense(cls, A, b, n_features: int | None = None) -> "SparseDataset":
        A = np.asarray(A, dtype=float)
        rows = []
        for a_row, label in zip(A, np.asarray(b, dtype=float)):
            nz = np.flatnonzero(a_row)
            rows.append(SparseRow(float(label), tuple(int(j) + 1 for j in nz),
                                  tuple(float(a_row[j]) for j in nz)))
        d = A.shape[1] if n_features is None else n_features
        return cls(tuple(rows), d)


def _number(token: str, line: int, column: int, what: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise LibSVMParseError(f"non-numeric {what} {token!r}", line, column) from None
    if not math.isfinite(v):
        raise LibSVMParseError(f"non-finite {what} {token!r}", line, column)
    return v


def _tokens(text: str):
    pos = 0
    for part in text.split():
        pos = text.index(part, pos)
        yield pos + 1, part
        pos += len(part)


def parse_libsvm(source, n_features: int | None = None) -> SparseDataset:
    """Parse ``<label> <idx>:<val> ...`` lines from a string or text stream.

    Blank lines and ``#`` comments are skipped. ``n_features`` raises the
    reported feature count above the largest index seen.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    rows = []
    max_index = 0
    for lineno, raw in enumerate(source, start=1):
        text = raw.split("#", 1)[0].rstrip("\r\n")
        toks = list(_tokens(text))
        if not toks:
            continue
        col, tok = toks[0]
        label = _number(tok, lineno, col, "label")
        indices, values = [], []
        prev = 0
        for col, tok in toks[1:]:
            idx_txt, sep, val_txt = tok.partition(":")
            if not sep or not idx_txt or not val_txt:
                raise LibSVMParseError(f"malformed feature token {tok!r}", lineno, col)
            try:
                idx = int(idx_txt)
            except ValueError:
                raise LibSVMParseError(f"non-integer feature index {idx_txt!r}", lineno, col) from None
            if idx < 1:
                raise LibSVMParseError(f"feature index {idx} is below 1", lineno, col)
            if idx <= prev:
                raise LibSVMParseError("non-increasing feature index", lineno, col)
            values.append(_number(val_txt, lineno, col + len(idx_txt) + 1, "feature value"))
            indices.append(idx)
            prev = idx
        rows.append(SparseRow(label, tuple(indices), tuple(values)))
        max_index = max(max_index, prev)
    if not rows:
        raise EmptyDatasetError("no instances in input")
    if n_features is not None:
        if n_features < max_index:
            raise DimensionError(f"n_features={n_features} is below max feature index {max_index}")
        max_index = n_features
    return SparseDataset(tuple(rows), max_index)


def load_libsvm(path: str | os.PathLike, n_features: int | None = None) -> SparseDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, n_features)


def format_number(v: float) -> str:
    """Shortest round-trip text for ``v``, with a trailing ``.0`` dropped."""
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def serialize_libsvm(ds: SparseDataset) -> str:
    """Canonical LIBSVM text: single spaces, no trailing whitespace, newline-terminated."""
    lines = []
    for row in ds.rows:
        parts = [format_number(row.label)]
        parts += [f"{i}:{format_number(v)}" for i, v in zip(row.indices, row.values)]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def scale_features(ds: SparseDataset, lower: float = -1.0, upper: float = 1.0) -> SparseDataset:
    """Per-feature min-max scaling to ``[lower, upper]``, implicit zeros included.

    Constant features are left unchanged.
    """
    A, b = ds.to_dense()
    lo, hi = A.min(axis=0), A.max(axis=0)
    span = hi - lo
    varying = span > 0
    A[:, varying] = lower + (upper - lower) * (A[:, varying] - lo[varying]) / span[varying]
    return SparseDataset.from_dense(A, b, ds.max_feature_index)


@dataclass(frozen=True)
class Partition:
    assignments: tuple
    policy: str = "contiguous-even"
    shuffle_seed: int | None = None

    @property
    def sizes(self) -> tuple:
        return tuple(len(a) for a in self.assignments)


def partition_even(ds: SparseDataset | int, m: int, shuffle_seed: int | None = None) -> Partition:
    """Contiguous blocks in file order; the first ``N mod m`` nodes get one extra row.

    With ``shuffle_seed`` the row order is permuted first.
    """
    n = ds if isinstance(ds, int) else ds.row_count
    if m < 1:
        raise ValueError("m must be positive")
    if m > n:
        raise ValueError(f"{m} nodes but only {n} rows; some node would be empty")
    order = np.arange(n)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    base, extra = divmod(n, m)
    out, start = [], 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        out.append(tuple(int(k) for k in order[start:start + size]))
        start += size
    return Partition(tuple(out), shuffle_seed=shuffle_seed)


def to_least_squares(ds: SparseDataset, part: Partition, node: int, power: int = 1,
                     target_dim: int | None = None, residual_bound: float | None = None) -> LeastSquaresProblem:
    """Least-squares oracle over the rows assigned to ``node`` (0-based)."""
    if not 0 <= node < len(part.assignments):
        raise IndexError(f"node {node} out of range")
    A, b = ds.to_dense(target_dim, rows=part.assignments[node])
    return LeastSquaresProblem(A, b, power, residual_bound)


def node_blocks(ds: SparseDataset, part: Partition, target_dim: int | None = None) -> list:
    return [ds.to_dense(target_dim, rows=rows) for rows in part.assignments]


def synthetic_regression(n_rows: int = 62, n_features: int = 2000, seed: int = 0) -> tuple:
    """Gaussian features scaled per column to ``[-1, 1]``, labels from a planted model.

    Returns ``(dataset, x_true)`` with ``labels = A x_true`` exactly.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_rows, n_features))
    lo, hi = A.min(axis=0), A.max(axis=0)
    A = -1.0 + 2.0 * (A - lo) / (hi - lo)
    x_true = rng.standard_normal(n_features) / math.sqrt(n_features)
    return SparseDataset.from_dense(A, A @ x_true), x_true


def describe_labels(ds: SparseDataset) -> dict:
    labels = np.array([r.label for r in ds.rows])
    uniq = np.unique(labels)
    out = {"count": int(labels.size), "min": float(labels.min()), "max": float(labels.max())}
    if uniq.size <= 10:
        out["distinct"] = [float(v) for v in uniq]
    return out
