"""Dense/sparse matrix containers and the linear algebra primitives the
sketching and coreset code is built on.

Sparse matrices are stored row-compressed (scipy CSR) so that products with
a sketch cost O(nnz) per output column.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np
import scipy.sparse as sp

# Singular values below RANK_RTOL * sigma_max are treated as zero.
RANK_RTOL = 1e-10

Block = Union[np.ndarray, sp.csr_matrix]


class DataMatrix:
    """An n x d real matrix, held either dense (row-major) or as CSR.

    Instances are treated as immutable: the underlying arrays are flagged
    read-only on construction.
    """

    __slots__ = ("_data", "_nnz")

    def __init__(self, data, *, check: bool = True):
        if sp.issparse(data):
            mat = sp.csr_matrix(data, dtype=np.float64, copy=True)
            mat.sum_duplicates()
            mat.sort_indices()
            if check and not np.all(np.isfinite(mat.data)):
                raise ValueError("matrix contains non-finite values")
            mat.data.flags.writeable = False
            mat.indices.flags.writeable = False
            mat.indptr.flags.writeable = False
            self._data = mat
            self._nnz = int(mat.nnz)
        else:
            arr = np.array(data, dtype=np.float64, order="C", copy=True)
            if arr.ndim != 2:
                raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
            if check and not np.all(np.isfinite(arr)):
                raise ValueError("matrix contains non-finite values")
            arr.flags.writeable = False
            self._data = arr
            self._nnz = int(np.count_nonzero(arr))
        n, d = self._data.shape
        if n < 1 or d < 1:
            raise ValueError(f"matrix must have positive shape, got {n}x{d}")

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def d(self) -> int:
        return self._data.shape[1]

    @property
    def nnz(self) -> int:
        return self._nnz

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self._data)

    @property
    def raw(self) -> Block:
        """The underlying ndarray or csr_matrix (read-only)."""
        return self._data

    def toarray(self) -> np.ndarray:
        if self.is_sparse:
            return self._data.toarray()
        return np.array(self._data)

    def iter_blocks(self, block_rows: int) -> Iterator[tuple[int, Block]]:
        """Yield ``(start_row, block)`` slices of at most ``block_rows`` rows."""
        for start in range(0, self.n, block_rows):
            yield start, self._data[start:start + block_rows]

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"DataMatrix({self.n}x{self.d}, {kind}, nnz={self.nnz})"


def as_data_matrix(A) -> DataMatrix:
    if isinstance(A, DataMatrix):
        return A
    return DataMatrix(A)


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """d x m matrix with orthonormal columns; m may be 0."""

    columns: np.ndarray

    def __post_init__(self):
        cols = np.array(self.columns, dtype=np.float64, order="C")
        if cols.ndim != 2:
            raise ValueError("basis columns must be a 2-d array")
        if cols.shape[1] > cols.shape[0]:
            raise ValueError(f"rank {cols.shape[1]} exceeds ambient dimension {cols.shape[0]}")
        cols.flags.writeable = False
        object.__setattr__(self, "columns", cols)

    @property
    def ambient_dim(self) -> int:
        return self.columns.shape[0]

    @property
    def rank(self) -> int:
        return self.columns.shape[1]

    def orthonormality_error(self) -> float:
        if self.rank == 0:
            return 0.0
        gram = self.columns.T @ self.columns
        return float(np.max(np.abs(gram - np.eye(self.rank))))

    def complement(self) -> "OrthonormalBasis":
        """Orthonormal basis of the orthogonal complement in R^d."""
        d, m = self.columns.shape
        if m == 0:
            return OrthonormalBasis(np.eye(d))
        q, _ = np.linalg.qr(self.columns, mode="complete")
        return OrthonormalBasis(q[:, m:])

    def __eq__(self, other):
        if not isinstance(other, OrthonormalBasis):
            return NotImplemented
        return np.array_equal(self.columns, other.columns)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SvdFactorization:
    """Thin SVD ``A = U diag(s) V^T``.

    ``left`` is n x p, ``right`` is d x p with p = min(n, d); ``rank`` is the
    numerical rank (count of singular values above the relative cutoff).
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    rank: int

    def __eq__(self, other):
        if not isinstance(other, SvdFactorization):
            return NotImplemented
        return (self.rank == other.rank
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.singular_values, other.singular_values)
                and np.array_equal(self.right, other.right))

    __hash__ = None


def frobenius_norm_sq(A) -> float:
    A = as_data_matrix(A)
    vals = A.raw.data if A.is_sparse else A.raw
    return float(np.dot(vals.ravel(), vals.ravel()))


def multiply(A, B: np.ndarray) -> np.ndarray:
    """Exact product ``A @ B`` returned dense. Sparse A only touches stored entries."""
    A = as_data_matrix(A)
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != A.d:
        raise ValueError(
            f"inner dimensions disagree: A is {A.n}x{A.d} but B has {B.shape[0]} rows")
    out = A.raw @ B
    return np.asarray(out)


def _numerical_rank(s: np.ndarray) -> int:
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def orthonormalize(M) -> OrthonormalBasis:
    """Orthonormal basis for the column span of ``M`` via a thin SVD.

    Directions with singular value <= 1e-10 * sigma_max are dropped, so a
    rank-deficient or all-zero input gives a smaller (possibly empty) basis.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("orthonormalize expects a 2-d array")
    if not np.all(np.isfinite(M)):
        raise ValueError("orthonormalize: input contains non-finite values")
    d = M.shape[0]
    if M.shape[1] == 0 or not np.any(M):
        return OrthonormalBasis(np.zeros((d, 0)))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    return OrthonormalBasis(u[:, :_numerical_rank(s)])


def fix_signs(right: np.ndarray, *others: np.ndarray) -> None:
    """Flip columns in place so each column of ``right`` has its
    largest-magnitude entry nonnegative (ties go to the lowest index).
    The same flips are applied to the matching columns of ``others``."""
    if right.shape[1] == 0:
        return
    idx = np.argmax(np.abs(right), axis=0)
    flip = right[idx, np.arange(right.shape[1])] < 0
    if np.any(flip):
        right[:, flip] *= -1.0
        for o in others:
            o[:, flip] *= -1.0


def full_svd(A) -> SvdFactorization:
    """Exact thin SVD with a deterministic sign convention on the right vectors."""
    A = as_data_matrix(A)
    u, s, vt = np.linalg.svd(A.toarray(), full_matrices=False)
    v = np.ascontiguousarray(vt.T)
    u = np.ascontiguousarray(u)
    fix_signs(v, u)
    for arr in (u, s, v):
        arr.flags.writeable = False
    return SvdFactorization(u, s, v, _numerical_rank(s))


def best_rank_m_residual(svd: SvdFactorization, m: int) -> float:
    """Sum of squared singular values beyond the first ``m``."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    tail = svd.singular_values[m:]
    return float(np.dot(tail, tail))


def project_rows(A, B: OrthonormalBasis) -> np.ndarray:
    """Coordinates of the rows of A in basis B, i.e. ``A @ B.columns``."""
    A = as_data_matrix(A)
    if B.ambient_dim != A.d:
        raise ValueError(
            f"basis ambient dimension {B.ambient_dim} does not match matrix width {A.d}")
    if B.rank == 0:
        return np.zeros((A.n, 0))
    return multiply(A, B.columns)
