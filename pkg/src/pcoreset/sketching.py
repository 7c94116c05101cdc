"""Random sign sketches and the two-pass randomized low-rank basis.

Sign generator
--------------
Column ``i`` of an r x n sketch (the column that multiplies data row ``i``)
is read off a Philox4x64-10 stream keyed by ``seed``. The stream for column
``i`` starts at counter ``i * ceil(r / 256)``; its 64-bit outputs are
unpacked least-significant bit first, and bit ``t`` gives entry ``(t, i)``
as ``+1`` for 0 and ``-1`` for 1. Any column range can therefore be
regenerated independently, which is what lets a streamed build reproduce
an in-memory build bit for bit.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterator, Protocol

import numpy as np
import scipy.sparse as sp

from .matrix_core import (
    Block,
    OrthonormalBasis,
    as_data_matrix,
    fix_signs,
    orthonormalize,
)

DEFAULT_BLOCK_ROWS = 4096
_MASK64 = (1 << 64) - 1


class RowSource(Protocol):
    """Anything that can stream its rows in order, once per call."""

    d: int

    def iter_blocks(self, block_rows: int) -> Iterator[tuple[int, Block]]: ...


@dataclass(frozen=True)
class SketchParams:
    target_rank: int
    epsilon: float
    delta: float
    constant: float = 1.0

    def __post_init__(self):
        if self.target_rank < 1:
            raise ValueError(f"target rank must be >= 1, got {self.target_rank}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.constant > 0.0:
            raise ValueError(f"constant must be positive, got {self.constant}")


def sketch_dim(p: SketchParams) -> int:
    """Rows of the sign sketch: ceil(c (m/eps + m ln m) ln(1/delta)), at least m + 1.

    Natural logs throughout; ``m`` is clamped to 2 inside the log so m = 1
    still gets a positive term. Any other log base only rescales ``c``.
    """
    m = p.target_rank
    r = math.ceil(p.constant * (m / p.epsilon + m * math.log(max(m, 2)))
                  * math.log(1.0 / p.delta))
    return max(r, m + 1)


def sign_columns(seed: int, r: int, start: int, stop: int) -> np.ndarray:
    """Columns ``start..stop-1`` of the r-row sign sketch, returned transposed
    as a ``(stop - start) x r`` int8 array."""
    count = stop - start
    per_col = -(-r // 256)
    first = start * per_col
    gen = np.random.Philox(key=int(seed), counter=[first & _MASK64, first >> 64, 0, 0])
    words = gen.random_raw(count * per_col * 4).astype("<u8", copy=False)
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")
    bits = bits.reshape(count, per_col * 256)[:, :r]
    return (1 - 2 * bits.astype(np.int8)).astype(np.int8)


@dataclass(frozen=True, eq=False)
class SketchMatrix:
    r: int
    n: int
    seed: int
    entries: np.ndarray  # r x n int8 in {-1, +1}

    def __eq__(self, other):
        if not isinstance(other, SketchMatrix):
            return NotImplemented
        return ((self.r, self.n, self.seed) == (other.r, other.n, other.seed)
                and np.array_equal(self.entries, other.entries))

    __hash__ = None


def make_jl_sketch(r: int, n: int, seed: int) -> SketchMatrix:
    if r < 1 or n < 1:
        raise ValueError(f"sketch shape must be positive, got {r}x{n}")
    entries = np.ascontiguousarray(sign_columns(seed, r, 0, n).T)
    entries.flags.writeable = False
    return SketchMatrix(r, n, int(seed), entries)


def apply_sketch(S: SketchMatrix, A) -> np.ndarray:
    """Dense ``S @ A``; for sparse A the cost is O(nnz(A) * r)."""
    A = as_data_matrix(A)
    if S.n != A.n:
        raise ValueError(f"sketch has {S.n} columns but the matrix has {A.n} rows")
    st = S.entries.T.astype(np.float64)
    return np.ascontiguousarray(np.asarray(A.raw.T @ st).T)


def _block_sq_norm(block: Block) -> float:
    vals = block.data if sp.issparse(block) else block
    vals = np.asarray(vals).ravel()
    return float(np.dot(vals, vals))


@dataclass
class LowRankResult:
    """Output of the two-pass construction.

    ``basis`` is R' (d x m_achieved); ``projected`` is A @ R'. ``frob_sq`` is
    ||A||_F^2 accumulated during the first pass.
    """

    basis: OrthonormalBasis
    projected: np.ndarray
    frob_sq: float
    n: int
    nnz: int
    requested_rank: int
    sketch_rows: int
    sketch_rank: int
    timings: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.basis.rank

    @property
    def shortfall(self) -> bool:
        """True when the sketch could not supply ``requested_rank`` directions."""
        return self.basis.rank < self.requested_rank


def _as_source(A) -> RowSource:
    if hasattr(A, "iter_blocks") and hasattr(A, "d"):
        return A
    return as_data_matrix(A)


def two_pass_low_rank_basis(A, p: SketchParams, seed: int,
                            block_rows: int = DEFAULT_BLOCK_ROWS) -> LowRankResult:
    """Top-m right singular directions of A projected onto rowspan(S A).

    Pass 1 accumulates (S A)^T block by block and Q = orth((S A)^T).
    Pass 2 forms B = A Q. The right singular vectors W of B come from the
    eigendecomposition of the small Gram matrix B^T B, and R' = Q W_m, so
    A R' R'^T equals the best rank-m approximation of A inside rowspan(S A).

    ``A`` may be a DataMatrix, array, or any row source; it is read exactly
    twice, in row order.
    """
    src = _as_source(A)
    d = src.d
    m = p.target_rank
    if m > d:
        raise ValueError(f"target rank {m} exceeds the column count {d}")
    r = sketch_dim(p)
    timings = {}

    t0 = time.perf_counter()
    sat = np.zeros((d, r))
    frob = 0.0
    n = 0
    nnz = 0
    for start, block in src.iter_blocks(block_rows):
        if start != n:
            raise ValueError(f"row source skipped rows: expected start {n}, got {start}")
        rows = block.shape[0]
        st = sign_columns(seed, r, start, start + rows).astype(np.float64)
        sat += np.asarray(block.T @ st)
        frob += _block_sq_norm(block)
        nnz += int(block.nnz) if sp.issparse(block) else int(np.count_nonzero(block))
        n += rows
    timings["sketch"] = time.perf_counter() - t0
    if m > n:
        raise ValueError(f"target rank {m} exceeds the row count {n}")

    t0 = time.perf_counter()
    q = orthonormalize(sat).columns
    del sat
    timings["orthonormalize"] = time.perf_counter() - t0
    rho = q.shape[1]

    t0 = time.perf_counter()
    b = np.empty((n, rho))
    seen = 0
    for start, block in src.iter_blocks(block_rows):
        rows = block.shape[0]
        b[start:start + rows] = np.asarray(block @ q) if rho else 0.0
        seen += rows
    if seen != n:
        raise ValueError(f"row source changed between passes: {n} rows then {seen}")
    timings["projection"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    keep = min(m, rho)
    if keep:
        gram = b.T @ b
        _, vecs = np.linalg.eigh(gram)
        w = np.ascontiguousarray(vecs[:, ::-1][:, :keep])
        basis = q @ w
        projected = b @ w
        fix_signs(basis, projected)
    else:
        basis = np.zeros((d, 0))
        projected = np.zeros((n, 0))
    timings["small_svd"] = time.perf_counter() - t0

    projected.flags.writeable = False
    return LowRankResult(
        basis=OrthonormalBasis(basis),
        projected=projected,
        frob_sq=frob,
        n=n,
        nnz=nnz,
        requested_rank=m,
        sketch_rows=r,
        sketch_rank=rho,
        timings=timings,
    )
