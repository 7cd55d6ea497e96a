"""Sparse datasets: libsvm ingestion, splitting, partitioning, synthetic generation.

Feature matrices are stored column-compressed (CSC) because the coordinate
descent inner loop and the Hessian-diagonal computation both iterate features.
A row view (CSR) is materialized lazily, mainly for test-set prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseDesignMatrix",
    "LabeledDataset",
    "PartitionSet",
    "SyntheticSpec",
    "parse_libsvm",
    "write_libsvm",
    "split_train_test",
    "partition",
    "generate_synthetic",
]


class SparseDesignMatrix:
    """Column-compressed feature matrix with an optional lazy row view.

    Wraps a ``scipy.sparse.csc_matrix`` in canonical form (sorted row
    indices, no duplicates, finite values). Immutable by convention: no
    method mutates the stored matrix after construction.
    """

    def __init__(self, matrix: sp.spmatrix, n_cols: int | None = None, validate: bool = True):
        csc = sp.csc_matrix(matrix)
        if n_cols is not None:
            if n_cols < csc.shape[1]:
                raise ValueError(
                    f"n_cols override {n_cols} is smaller than observed column count {csc.shape[1]}"
                )
            csc.resize(csc.shape[0], n_cols)
        csc.sort_indices()
        csc = csc.astype(np.float64, copy=False)
        if validate:
            nnz_before = csc.nnz
            csc.sum_duplicates()
            if csc.nnz != nnz_before:
                raise ValueError("duplicate row indices within a column")
            if csc.nnz and not np.all(np.isfinite(csc.data)):
                raise ValueError("matrix contains non-finite values")
        self._csc = csc
        self._csr: sp.csr_matrix | None = None
        self._csc_sq: sp.csc_matrix | None = None

    @classmethod
    def from_dense(cls, arr: np.ndarray) -> "SparseDesignMatrix":
        return cls(sp.csc_matrix(np.asarray(arr, dtype=np.float64)))

    @property
    def n_rows(self) -> int:
        return self._csc.shape[0]

    @property
    def n_cols(self) -> int:
        return self._csc.shape[1]

    @property
    def nnz(self) -> int:
        return int(self._csc.nnz)

    @property
    def csc(self) -> sp.csc_matrix:
        return self._csc

    @property
    def row_view(self) -> sp.csr_matrix:
        """CSR copy of the same triples, built on first access."""
        if self._csr is None:
            self._csr = self._csc.tocsr()
        return self._csr

    @property
    def squared_csc(self) -> sp.csc_matrix:
        """Matrix with entries squared (shares sparsity pattern); cached.

        Used for the Hessian diagonal of the logistic loss.
        """
        if self._csc_sq is None:
            self._csc_sq = sp.csc_matrix(
                (self._csc.data**2, self._csc.indices, self._csc.indptr),
                shape=self._csc.shape,
            )
        return self._csc_sq

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices and values of column ``j``."""
        lo, hi = self._csc.indptr[j], self._csc.indptr[j + 1]
        return self._csc.indices[lo:hi], self._csc.data[lo:hi]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i`` (materializes the row view)."""
        rv = self.row_view
        lo, hi = rv.indptr[i], rv.indptr[i + 1]
        return rv.indices[lo:hi], rv.data[lo:hi]

    def take_rows(self, rows: np.ndarray) -> "SparseDesignMatrix":
        sub = self.row_view[rows].tocsc()
        return SparseDesignMatrix(sub, n_cols=self.n_cols, validate=False)

    def matvec(self, w: np.ndarray) -> np.ndarray:
        return self._csc @ w

    def toarray(self) -> np.ndarray:
        return self._csc.toarray()


@dataclass(frozen=True)
class LabeledDataset:
    """Design matrix plus binary labels in {0, 1}."""

    X: SparseDesignMatrix
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != self.X.n_rows:
            raise ValueError("label vector length must equal the number of rows")
        if y.size and not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "y", y)

    @property
    def n_rows(self) -> int:
        return self.X.n_rows

    @property
    def n_cols(self) -> int:
        return self.X.n_cols

    def take_rows(self, rows: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.X.take_rows(rows), self.y[rows])


@dataclass(frozen=True)
class PartitionSet:
    """Disjoint row partitions of a training set.

    ``partition_of[i]`` is the partition index of original row ``i``;
    ``row_indices[k]`` lists the original rows of partition ``k`` in
    partition-local order.
    """

    partitions: list[LabeledDataset]
    partition_of: np.ndarray
    row_indices: list[np.ndarray] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.partitions)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the known-model synthetic generator."""

    n_samples: int
    n_features: int
    n_true_nonzeros: int
    zero_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_true_nonzeros > self.n_features:
            raise ValueError("n_true_nonzeros must not exceed n_features")
        if not 0.0 <= self.zero_prob < 1.0:
            raise ValueError("zero_prob must lie in [0, 1)")
        if self.n_samples < 1 or self.n_features < 1:
            raise ValueError("n_samples and n_features must be positive")


def parse_libsvm(path: str | Path, n_features: int | None = None) -> LabeledDataset:
    """Read a libsvm-format text file into a :class:`LabeledDataset`.

    Each line is ``label idx:val idx:val ...`` with 1-based, strictly
    ascending indices. Labels -1 and 0 map to 0; +1 and 1 map to 1. The
    feature dimension is the largest observed index unless ``n_features``
    raises it (needed when train/test files differ in max index).
    """
    path = Path(path)
    labels: list[float] = []
    indptr = [0]
    col_idx: list[int] = []
    values: list[float] = []
    max_col = -1
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: invalid label {parts[0]!r}") from exc
            if label not in (-1.0, 0.0, 1.0):
                raise ValueError(f"{path}:{line_no}: label {parts[0]!r} outside {{-1, 0, 1}}")
            labels.append(1.0 if label == 1.0 else 0.0)
            prev = 0
            for tok in parts[1:]:
                idx_s, _, val_s = tok.partition(":")
                if not _:
                    raise ValueError(f"{path}:{line_no}: malformed token {tok!r}")
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError as exc:
                    raise ValueError(f"{path}:{line_no}: malformed token {tok!r}") from exc
                if idx <= prev:
                    raise ValueError(
                        f"{path}:{line_no}: indices must be 1-based and strictly ascending"
                    )
                prev = idx
                col_idx.append(idx - 1)
                values.append(val)
                if idx - 1 > max_col:
                    max_col = idx - 1
            indptr.append(len(col_idx))
    n_rows = len(labels)
    d = max_col + 1
    if n_features is not None:
        if n_features < d:
            raise ValueError(f"n_features override {n_features} below observed dimension {d}")
        d = n_features
    csr = sp.csr_matrix(
        (np.asarray(values), np.asarray(col_idx, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(n_rows, d),
    )
    return LabeledDataset(SparseDesignMatrix(csr.tocsc()), np.asarray(labels))


def write_libsvm(data: LabeledDataset, path: str | Path) -> None:
    """Write ``data`` in libsvm text format (1-based indices, labels 0/1).

    Values use shortest round-trip formatting so a parse of the output
    reproduces the exact same floats.
    """
    rv = data.X.row_view
    with Path(path).open("w", encoding="utf-8") as fh:
        for i in range(data.n_rows):
            lo, hi = rv.indptr[i], rv.indptr[i + 1]
            cols = rv.indices[lo:hi]
            vals = rv.data[lo:hi]
            toks = [str(int(data.y[i]))]
            toks.extend(f"{c + 1}:{float(v)!r}" for c, v in zip(cols, vals))
            fh.write(" ".join(toks))
            fh.write("\n")


def split_train_test(
    data: LabeledDataset, test_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Random train/test split, deterministic for a given seed.

    Test size is ``round(n * test_fraction)``; splits are disjoint and
    preserve original row order within each side.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n = data.n_rows
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return data.take_rows(train_rows), data.take_rows(test_rows)


def partition(data: LabeledDataset, p: int, seed: int) -> PartitionSet:
    """Shuffle rows and cut into ``p`` contiguous blocks of near-equal size."""
    n = data.n_rows
    if p < 1:
        raise ValueError("p must be at least 1")
    if p > n:
        raise ValueError(f"cannot split {n} rows into {p} non-empty partitions")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    blocks = np.array_split(perm, p)
    partition_of = np.empty(n, dtype=np.int64)
    parts = []
    for k, rows in enumerate(blocks):
        partition_of[rows] = k
        parts.append(data.take_rows(rows))
    return PartitionSet(parts, partition_of, [np.asarray(b) for b in blocks])


def generate_synthetic(spec: SyntheticSpec) -> tuple[LabeledDataset, np.ndarray]:
    """Simulate a sparse classification task with a known generating model.

    Each feature value is 0 with probability ``zero_prob`` and otherwise
    U(0,1). The true weight vector has exactly ``n_true_nonzeros`` entries,
    placed uniformly at random, with values uniform on [-2,-0.5] u [0.5,2]
    (bounded away from zero so support recovery is well posed). Labels are
    Bernoulli with success probability expit(x.w_true).

    Draw order is fixed (true weights, then columns 0..d-1, then labels),
    so a given seed reproduces the dataset bit for bit.
    """
    rng = np.random.default_rng(spec.seed)
    n, d, s = spec.n_samples, spec.n_features, spec.n_true_nonzeros

    w_true = np.zeros(d)
    if s > 0:
        support = rng.choice(d, size=s, replace=False)
        magnitudes = rng.uniform(0.5, 2.0, size=s)
        signs = rng.integers(0, 2, size=s) * 2 - 1
        w_true[support] = magnitudes * signs

    keep_prob = 1.0 - spec.zero_prob
    col_indices = []
    col_values = []
    indptr = np.zeros(d + 1, dtype=np.int64)
    for j in range(d):
        mask = rng.random(n) < keep_prob
        rows = np.flatnonzero(mask)
        col_indices.append(rows)
        col_values.append(rng.random(rows.size))
        indptr[j + 1] = indptr[j] + rows.size
    indices = np.concatenate(col_indices) if d else np.empty(0, dtype=np.int64)
    data_vals = np.concatenate(col_values) if d else np.empty(0)
    X = sp.csc_matrix((data_vals, indices, indptr), shape=(n, d))

    margins = X @ w_true
    probs = 1.0 / (1.0 + np.exp(-margins))
    y = (rng.random(n) < probs).astype(np.float64)
    return LabeledDataset(SparseDesignMatrix(X, validate=False), y), w_true
