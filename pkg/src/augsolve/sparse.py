"""Compressed sparse column storage for symmetric matrices.

Matrices here are square and symmetric.  The default storage mode keeps
only the lower triangle (``mode="lower"``); operations expand entries
symmetrically on the fly.  ``mode="full"`` stores whatever entries the
caller supplies and treats them literally, which is occasionally useful
for oracles and I/O round trips.

Column pointers and row indices follow the usual CSC convention: column
``j`` occupies ``row_idx[col_ptr[j]:col_ptr[j+1]]``, rows strictly
increasing within a column.  Instances are immutable after construction;
the underlying numpy arrays are marked read-only.
"""

from __future__ import annotations

import numpy as np


class SparseFormatError(ValueError):
    """Raised when arrays do not form a valid CSC symmetric matrix."""


class Permutation:
    """A bijection on ``range(n)`` stored both ways.

    ``perm[new] = old`` gives the elimination order: position ``new`` in
    the permuted matrix corresponds to row/column ``old`` of the
    original.  ``inv`` is the inverse map, ``inv[old] = new``.
    """

    __slots__ = ("perm", "inv")

    def __init__(self, perm: np.ndarray):
        perm = np.asarray(perm, dtype=np.int64)
        n = perm.shape[0]
        inv = np.full(n, -1, dtype=np.int64)
        inv[perm] = np.arange(n, dtype=np.int64)
        if np.any(inv < 0):
            raise SparseFormatError("permutation is not a bijection")
        perm.setflags(write=False)
        inv.setflags(write=False)
        self.perm = perm
        self.inv = inv

    @property
    def n(self) -> int:
        return self.perm.shape[0]

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(np.arange(n, dtype=np.int64))

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.perm, other.perm)

    def __repr__(self) -> str:
        return f"Permutation({self.perm.tolist()})"


def permute_vector(p: Permutation, x: np.ndarray) -> np.ndarray:
    """Return x reordered into permuted positions: out[new] = x[perm[new]]."""
    return np.asarray(x)[p.perm]


def unpermute_vector(p: Permutation, x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`permute_vector`: out[old] = x[inv[old]]."""
    return np.asarray(x)[p.inv]


class SparseMatrix:
    """Square symmetric matrix in CSC form.

    Parameters
    ----------
    n : int
        Dimension.
    col_ptr, row_idx, values : ndarray
        CSC arrays.  In ``"lower"`` mode every stored entry must satisfy
        ``row >= col`` and represents both (i, j) and (j, i).
    mode : str
        ``"lower"`` (default) or ``"full"``.
    """

    __slots__ = ("n", "col_ptr", "row_idx", "values", "mode", "_cache")

    def __init__(self, n, col_ptr, row_idx, values, mode="lower"):
        if mode not in ("lower", "full"):
            raise SparseFormatError(f"unknown mode {mode!r}")
        col_ptr = np.ascontiguousarray(col_ptr, dtype=np.int64)
        row_idx = np.ascontiguousarray(row_idx, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if n < 0:
            raise SparseFormatError("negative dimension")
        if col_ptr.shape != (n + 1,):
            raise SparseFormatError("col_ptr must have length n+1")
        if col_ptr[0] != 0 or np.any(np.diff(col_ptr) < 0):
            raise SparseFormatError("col_ptr must start at 0 and be nondecreasing")
        nnz = int(col_ptr[-1])
        if row_idx.shape != (nnz,) or values.shape != (nnz,):
            raise SparseFormatError("row_idx/values length disagrees with col_ptr")
        if nnz and (row_idx.min() < 0 or row_idx.max() >= n):
            raise SparseFormatError("row index out of range")
        cols = np.repeat(np.arange(n, dtype=np.int64), np.diff(col_ptr))
        if nnz:
            # strictly increasing rows within each column, no duplicates
            same_col = cols[1:] == cols[:-1]
            if np.any(same_col & (np.diff(row_idx) <= 0)):
                raise SparseFormatError("row indices must be strictly increasing per column")
            if mode == "lower" and np.any(row_idx < cols):
                raise SparseFormatError("lower mode admits only entries with row >= col")
        if not np.all(np.isfinite(values)):
            raise SparseFormatError("nonfinite value")
        for a in (col_ptr, row_idx, values):
            a.setflags(write=False)
        self.n = int(n)
        self.col_ptr = col_ptr
        self.row_idx = row_idx
        self.values = values
        self.mode = mode
        self._cache = {}

    @property
    def nnz(self) -> int:
        """Stored entry count (one per symmetric pair in lower mode)."""
        return int(self.col_ptr[-1])

    # -- construction -------------------------------------------------

    @staticmethod
    def from_triplets(entries, n: int, mode: str = "lower") -> "SparseMatrix":
        """Build from an iterable of (i, j, value) triplets.

        Duplicate coordinates are summed.  In lower mode each symmetric
        pair must be supplied once, in either orientation; (i, j) and
        (j, i) land on the same stored entry and would therefore sum.
        """
        rows, cols, vals = [], [], []
        for i, j, v in entries:
            i = int(i)
            j = int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise SparseFormatError(f"triplet index ({i}, {j}) out of range for n={n}")
            if mode == "lower" and i < j:
                i, j = j, i
            rows.append(i)
            cols.append(j)
            vals.append(float(v))
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        return _compress(n, rows, cols, vals, mode)

    @staticmethod
    def identity(n: int) -> "SparseMatrix":
        return SparseMatrix(
            n,
            np.arange(n + 1, dtype=np.int64),
            np.arange(n, dtype=np.int64),
            np.ones(n),
            mode="lower",
        )

    # -- element access ------------------------------------------------

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        cols = self._col_of_entry()
        hit = self.row_idx == cols
        d[self.row_idx[hit]] = self.values[hit]
        return d

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        cols = self._col_of_entry()
        out[self.row_idx, cols] = self.values
        if self.mode == "lower":
            off = self.row_idx != cols
            out[cols[off], self.row_idx[off]] = self.values[off]
        return out

    def _col_of_entry(self) -> np.ndarray:
        cols = self._cache.get("cols")
        if cols is None:
            cols = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.col_ptr))
            cols.setflags(write=False)
            self._cache["cols"] = cols
        return cols

    # -- operations ----------------------------------------------------

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Symmetric matrix-vector product A @ x."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"mismatched shapes: matrix n={self.n}, vector {x.shape}")
        cols = self._col_of_entry()
        y = np.bincount(self.row_idx, weights=self.values * x[cols], minlength=self.n)
        if self.mode == "lower":
            off = self._cache.get("offdiag")
            if off is None:
                off = np.flatnonzero(self.row_idx != cols)
                off.setflags(write=False)
                self._cache["offdiag"] = off
            y += np.bincount(cols[off], weights=self.values[off] * x[self.row_idx[off]],
                             minlength=self.n)
        return y

    def permute_symmetric(self, p: Permutation) -> "SparseMatrix":
        """Return P^T A P, i.e. entry (new_i, new_j) = A[perm[new_i], perm[new_j]]."""
        if p.n != self.n:
            raise ValueError("permutation size mismatch")
        rows = p.inv[self.row_idx]
        cols = p.inv[self._col_of_entry()]
        if self.mode == "lower":
            swap = rows < cols
            rows2 = np.where(swap, cols, rows)
            cols2 = np.where(swap, rows, cols)
            rows, cols = rows2, cols2
        return _compress(self.n, rows, cols, self.values.copy(), self.mode)

    def extract_principal_submatrix(self, indices: np.ndarray) -> np.ndarray:
        """Dense m-by-m principal submatrix A[ix, ix] for sorted distinct ix."""
        ix = np.asarray(indices, dtype=np.int64)
        if ix.ndim != 1 or ix.size == 0:
            raise ValueError("index set must be a nonempty 1-D array")
        if np.any(np.diff(ix) <= 0):
            raise ValueError("index set must be strictly increasing")
        if ix[0] < 0 or ix[-1] >= self.n:
            raise ValueError("index out of range")
        m = ix.size
        out = np.zeros((m, m))
        for jj, j in enumerate(ix):
            lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
            rows = self.row_idx[lo:hi]
            pos = np.searchsorted(ix, rows)
            pos_ok = pos < m
            hitrows = np.where(pos_ok, pos, 0)
            hit = pos_ok & (ix[hitrows] == rows)
            out[pos[hit], jj] = self.values[lo:hi][hit]
            if self.mode == "lower":
                offhit = hit & (rows != j)
                out[jj, pos[offhit]] = self.values[lo:hi][offhit]
        return out

    def __repr__(self) -> str:
        return f"SparseMatrix(n={self.n}, nnz={self.nnz}, mode={self.mode!r})"


def _compress(n, rows, cols, vals, mode) -> SparseMatrix:
    """Sort triplets column-major, merge duplicates, build CSC."""
    order = np.lexsort((rows, cols))
    rows = rows[order]
    cols = cols[order]
    vals = vals[order]
    if rows.size:
        keep = np.ones(rows.size, dtype=bool)
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        group = np.cumsum(keep) - 1
        merged = np.bincount(group, weights=vals)
        rows = rows[keep]
        cols = cols[keep]
        vals = merged
    col_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(col_ptr, cols + 1, 1)
    np.cumsum(col_ptr, out=col_ptr)
    return SparseMatrix(n, col_ptr, rows, vals, mode=mode)


def as_lower(A: SparseMatrix) -> SparseMatrix:
    """Canonicalize to lower-only storage.

    Full-mode input may store one triangle or both; symmetric pairs that
    appear twice are averaged, so symmetric full storage round-trips and
    one-sided storage is simply folded down.
    """
    if A.mode == "lower":
        return A
    cols = A._col_of_entry()
    lo = np.minimum(A.row_idx, cols)
    hi = np.maximum(A.row_idx, cols)
    order = np.lexsort((hi, lo))
    r = hi[order]
    c = lo[order]
    v = A.values[order]
    if r.size:
        keep = np.ones(r.size, dtype=bool)
        keep[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        group = np.cumsum(keep) - 1
        sums = np.bincount(group, weights=v)
        counts = np.bincount(group)
        r, c, v = r[keep], c[keep], sums / counts
    return _compress(A.n, r, c, v, "lower")


# -- Matrix Market I/O ----------------------------------------------------

_MM_HEADER = "%%MatrixMarket matrix coordinate real"


def mm_write(A: SparseMatrix, path) -> None:
    """Write in Matrix Market coordinate format, 1-based indices.

    Lower-mode matrices are written with the ``symmetric`` qualifier and
    one entry per symmetric pair; full-mode matrices use ``general``.
    """
    kind = "symmetric" if A.mode == "lower" else "general"
    cols = A._col_of_entry()
    with open(path, "w") as fh:
        fh.write(f"{_MM_HEADER} {kind}\n")
        fh.write(f"{A.n} {A.n} {A.nnz}\n")
        for i, j, v in zip(A.row_idx, cols, A.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def mm_read(path) -> SparseMatrix:
    """Read a coordinate real matrix written by :func:`mm_write`.

    ``symmetric`` files load in lower mode, ``general`` in full mode.
    Rejects non-square sizes and out-of-range indices.
    """
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split()
        if (len(parts) != 5 or parts[0] != "%%MatrixMarket"
                or parts[1:4] != ["matrix", "coordinate", "real"]
                or parts[4] not in ("symmetric", "general")):
            raise SparseFormatError(f"unsupported Matrix Market header: {header!r}")
        kind = parts[4]
        line = fh.readline()
        while line and line.lstrip().startswith("%"):
            line = fh.readline()
        try:
            nr, nc, nnz = (int(t) for t in line.split())
        except ValueError as exc:
            raise SparseFormatError(f"bad size line: {line!r}") from exc
        if nr != nc:
            raise SparseFormatError(f"matrix is {nr}x{nc}, expected square")
        entries = []
        for _ in range(nnz):
            line = fh.readline()
            if not line:
                raise SparseFormatError("file ends before declared entry count")
            try:
                si, sj, sv = line.split()
                i, j, v = int(si) - 1, int(sj) - 1, float(sv)
            except ValueError as exc:
                raise SparseFormatError(f"bad entry line: {line!r}") from exc
            entries.append((i, j, v))
    mode = "lower" if kind == "symmetric" else "full"
    if mode == "lower":
        for i, j, _ in entries:
            if i < j:
                raise SparseFormatError(
                    f"symmetric file stores upper entry ({i + 1}, {j + 1})")
    return SparseMatrix.from_triplets(entries, nr, mode=mode)
