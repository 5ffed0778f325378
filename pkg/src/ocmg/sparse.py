"""Compressed-row sparse matrices and the small dense solves the solvers need.

The row-compressed :class:`SparseMatrix` is the carrier for every assembled
operator (mass, stiffness, divergence, saddle-point blocks, grid transfers).
A :class:`ColumnView` materializes the same entries in column-compressed
order, which the smoother sweeps need for their residual updates.  Finalized
matrices are immutable (the underlying arrays are marked read-only) and can
be shared freely across threads.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse


class SingularMatrixError(RuntimeError):
    """Raised when a dense factorization meets an exactly singular pivot."""


def _as_readonly(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = out.copy()
    out.setflags(write=False)
    return out


class SparseMatrix:
    """Sparse matrix in canonical compressed-row form.

    Parameters
    ----------
    nrows, ncols : int
        Matrix dimensions.
    row_offsets : array of int, length nrows+1
        Start of each row in ``col_indices``/``values``.
    col_indices : array of int
        Column index of each stored entry; strictly increasing within a row.
    values : array of float
        Stored entries.  Explicit zeros are not allowed in finalized
        matrices; use :meth:`from_coo` which removes them.
    """

    __slots__ = ("nrows", "ncols", "row_offsets", "col_indices", "values",
                 "_csc_cache")

    def __init__(self, nrows, ncols, row_offsets, col_indices, values,
                 validate=True):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.row_offsets = _as_readonly(row_offsets, np.int64)
        self.col_indices = _as_readonly(col_indices, np.int64)
        self.values = _as_readonly(values, np.float64)
        self._csc_cache = None
        if validate:
            self._validate()

    def _validate(self):
        off = self.row_offsets
        if off.shape[0] != self.nrows + 1:
            raise ValueError("row_offsets must have length nrows+1")
        if off[0] != 0 or off[-1] != self.values.shape[0]:
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(off) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if self.col_indices.shape != self.values.shape:
            raise ValueError("col_indices and values length mismatch")
        if self.col_indices.size and (self.col_indices.min() < 0
                                      or self.col_indices.max() >= self.ncols):
            raise ValueError("column index out of range")
        # strictly increasing columns within each row
        d = np.diff(self.col_indices)
        new_row = np.zeros(self.col_indices.size - 1, dtype=bool) \
            if self.col_indices.size else np.zeros(0, dtype=bool)
        if new_row.size:
            new_row[off[1:-1] - 1] = True
            if np.any((d <= 0) & ~new_row):
                raise ValueError("col_indices must be strictly increasing "
                                 "within each row")

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals):
        """Finalize triplet data: duplicates summed, exact zeros dropped."""
        m = scipy.sparse.coo_matrix(
            (np.asarray(vals, dtype=np.float64),
             (np.asarray(rows), np.asarray(cols))),
            shape=(nrows, ncols)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        return cls(nrows, ncols, m.indptr, m.indices, m.data, validate=False)

    @classmethod
    def from_scipy(cls, m):
        """Finalize a scipy sparse matrix (any format)."""
        c = m.tocsr().copy()
        c.sum_duplicates()
        c.sort_indices()
        c.eliminate_zeros()
        return cls(c.shape[0], c.shape[1], c.indptr, c.indices, c.data,
                   validate=False)

    @classmethod
    def from_dense(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        rows, cols = np.nonzero(arr)
        return cls.from_coo(arr.shape[0], arr.shape[1], rows, cols,
                            arr[rows, cols])

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx,
                   np.ones(n), validate=False)

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return self.values.shape[0]

    def max_row_nnz(self):
        """Largest number of stored entries in any row."""
        if self.nrows == 0:
            return 0
        return int(np.diff(self.row_offsets).max())

    def to_scipy(self):
        """Zero-copy view as ``scipy.sparse.csr_matrix``."""
        return scipy.sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.nrows, self.ncols))

    def to_dense(self):
        return self.to_scipy().toarray()

    def diagonal(self):
        return self.to_scipy().diagonal()

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.ncols,):
            raise ValueError(f"matvec dimension mismatch: matrix is "
                             f"{self.nrows}x{self.ncols}, vector has "
                             f"length {x.shape}")
        return self.to_scipy() @ x

    def transpose(self):
        """Transpose in canonical compressed-row form."""
        t = self.to_scipy().transpose().tocsr()
        t.sort_indices()
        return SparseMatrix(self.ncols, self.nrows, t.indptr, t.indices,
                            t.data, validate=False)

    def column_view(self):
        """Column-compressed view of the same entries (cached)."""
        if self._csc_cache is None:
            self._csc_cache = ColumnView(self)
        return self._csc_cache

    def scaled(self, factor):
        return SparseMatrix(self.nrows, self.ncols, self.row_offsets,
                            self.col_indices, factor * self.values,
                            validate=False)

    def __add__(self, other):
        return SparseMatrix.from_scipy(self.to_scipy() + other.to_scipy())

    def write_matrix_market(self, path):
        """Write the matrix in MatrixMarket coordinate format (1-based)."""
        coo = self.to_scipy().tocoo()
        with open(path, "w") as fh:
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"{self.nrows} {self.ncols} {self.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


class ColumnView:
    """Column-compressed mirror of a :class:`SparseMatrix`.

    ``col_offsets``/``row_indices``/``values`` hold, for each column, the
    (row, value) pairs of the parent matrix; the structure equals the row
    structure of the transpose exactly.
    """

    __slots__ = ("nrows", "ncols", "col_offsets", "row_indices", "values")

    def __init__(self, matrix):
        csc = matrix.to_scipy().tocsc()
        csc.sort_indices()
        self.nrows = matrix.nrows
        self.ncols = matrix.ncols
        self.col_offsets = _as_readonly(csc.indptr, np.int64)
        self.row_indices = _as_readonly(csc.indices, np.int64)
        self.values = _as_readonly(csc.data, np.float64)

    def column(self, j):
        """(row indices, values) of column ``j``."""
        lo, hi = self.col_offsets[j], self.col_offsets[j + 1]
        return self.row_indices[lo:hi], self.values[lo:hi]

    def to_matrix(self):
        """Rebuild the parent matrix; exact round trip."""
        csc = scipy.sparse.csc_matrix(
            (self.values, self.row_indices, self.col_offsets),
            shape=(self.nrows, self.ncols))
        c = csc.tocsr()
        c.sort_indices()
        return SparseMatrix(self.nrows, self.ncols, c.indptr, c.indices,
                            c.data, validate=False)


# ----------------------------------------------------------------------
# module-level operations
# ----------------------------------------------------------------------

def matvec(matrix, x):
    """y = matrix @ x with strict dimension checking."""
    return matrix.matvec(x)


def transpose(matrix):
    return matrix.transpose()


def sparse_triple_diag(d_matrix, w_inv):
    """Diagonal of ``D @ diag(w_inv) @ D^T`` without forming the product.

    ``w_inv`` must be strictly positive (it is the inverse of a diagonal
    weight).  Entry i is ``sum_j D_ij^2 * w_inv[j]``.
    """
    w_inv = np.asarray(w_inv, dtype=np.float64)
    if w_inv.shape != (d_matrix.ncols,):
        raise ValueError("w_inv length must equal the column count")
    if np.any(w_inv <= 0.0):
        raise ValueError("w_inv entries must be strictly positive")
    contrib = d_matrix.values ** 2 * w_inv[d_matrix.col_indices]
    out = np.zeros(d_matrix.nrows)
    rows = np.repeat(np.arange(d_matrix.nrows),
                     np.diff(d_matrix.row_offsets))
    np.add.at(out, rows, contrib)
    return out


class DenseLU:
    """Pivoted LU factorization of a dense square matrix, reusable solves.

    Partial pivoting handles the symmetric-indefinite saddle-point blocks;
    an exactly zero pivot raises :class:`SingularMatrixError`.
    """

    def __init__(self, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be dense square")
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.lu, self.piv = scipy.linalg.lu_factor(a)
        if np.any(np.diag(self.lu) == 0.0):
            raise SingularMatrixError("exactly singular pivot in LU "
                                      "factorization")
        self.n = a.shape[0]

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError("right-hand side length mismatch")
        return scipy.linalg.lu_solve((self.lu, self.piv), b)


def dense_lu_solve(a, b):
    """Solve a dense square system by pivoted LU."""
    return DenseLU(a).solve(b)
