"""Rank-reduction coresets for subspace and (k, j)-projective clustering.

A coreset stores the n x m coordinates ``A R`` of the data in an
orthonormal basis R (d x m) and a tail energy, so that for any closed set C
``dist^2(A R R^T, C) + tail`` approximates ``dist^2(A, C)``.
"""
from __future__ import annotations

import math
import struct
import time
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ClosedSet, dist2_coords_to_closedset
from .matrix_core import (
    DataMatrix,
    OrthonormalBasis,
    as_data_matrix,
    best_rank_m_residual,
    frobenius_norm_sq,
    full_svd,
    project_rows,
)
from .sketching import DEFAULT_BLOCK_ROWS, SketchParams, two_pass_low_rank_basis

PROJECTIVE_RANK_FACTOR = 52


class PreconditionError(ValueError):
    """Raised when problem parameters violate a required inequality."""


class CoresetFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class CoresetParams:
    """Parameters for a (k, j) projective-clustering coreset.

    ``sketch_epsilon`` overrides the accuracy handed to the sketch-size
    formula; by default the sketch uses ``epsilon`` itself.
    """

    k: int
    j: int
    epsilon: float
    delta: float
    affine: bool = False
    rank_override: Optional[int] = None
    constant: float = 1.0
    sketch_epsilon: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise PreconditionError(f"k >= 1 violated: k = {self.k}")
        if self.j < 1:
            raise PreconditionError(f"j >= 1 violated: j = {self.j}")
        if not 0.0 < self.epsilon < 1.0:
            raise PreconditionError(f"0 < epsilon < 1 violated: epsilon = {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise PreconditionError(f"0 < delta < 1 violated: delta = {self.delta}")
        if self.rank_override is not None and self.rank_override < 1:
            raise PreconditionError(f"rank_override >= 1 violated: {self.rank_override}")
        if self.sketch_epsilon is not None and not 0.0 < self.sketch_epsilon <= 1.0:
            raise PreconditionError(
                f"0 < sketch_epsilon <= 1 violated: {self.sketch_epsilon}")

    @property
    def j_star(self) -> int:
        return self.k * (self.j + 1)

    @property
    def effective_sketch_epsilon(self) -> float:
        return self.epsilon if self.sketch_epsilon is None else self.sketch_epsilon

    def validate_shape(self, n: Optional[int], d: int) -> None:
        """Check the shape constraints; ``n=None`` skips the row-count checks."""
        if not self.j < d - 1:
            raise PreconditionError(f"j < d - 1 violated: j = {self.j}, d = {d}")
        if not self.j_star <= d - 1:
            raise PreconditionError(
                f"k(j+1) <= d - 1 violated: k(j+1) = {self.j_star}, d = {d}")
        if n is not None and not self.k < n - 1:
            raise PreconditionError(f"k < n - 1 violated: k = {self.k}, n = {n}")


def _exact(x: float) -> Fraction:
    # shortest decimal that round-trips, so 52*4/0.8**2 is exactly 325
    return Fraction(repr(float(x)))


def projective_rank(p: CoresetParams, d: Optional[int] = None) -> int:
    if p.rank_override is not None:
        m = p.rank_override
    else:
        m = math.ceil(PROJECTIVE_RANK_FACTOR * p.j_star / _exact(p.epsilon) ** 2)
    return m if d is None else min(m, d)


def subspace_rank(j: int, epsilon: float, d: Optional[int] = None) -> int:
    if j < 1:
        raise PreconditionError(f"j >= 1 violated: j = {j}")
    if not 0.0 < epsilon < 1.0:
        raise PreconditionError(f"0 < epsilon < 1 violated: epsilon = {epsilon}")
    m = math.ceil(j / _exact(epsilon))
    return m if d is None else min(m, d)


@dataclass(frozen=True)
class PhaseTimings:
    total: float = 0.0
    sketch: float = 0.0
    orthonormalize: float = 0.0
    small_svd: float = 0.0
    projection: float = 0.0


@dataclass(frozen=True, eq=False)
class Coreset:
    basis: OrthonormalBasis        # R*, d x m*
    projected: np.ndarray          # A R*, n x m*
    tail_energy: float             # Delta*
    params: CoresetParams
    seed: int
    delta_mode: str                # "estimated" | "exact"
    method: str                    # "randomized" | "exact"
    problem: str                   # "projective" | "subspace"
    frob_sq: float                 # ||A||_F^2
    nnz: int
    sketch_rows: int = 0
    timings: PhaseTimings = field(default_factory=PhaseTimings)

    @property
    def n(self) -> int:
        return self.projected.shape[0]

    @property
    def d(self) -> int:
        return self.basis.ambient_dim

    @property
    def rank(self) -> int:
        return self.basis.rank

    @property
    def construction_time(self) -> float:
        return self.timings.total

    def reconstruct(self) -> np.ndarray:
        """The low-rank matrix A R* R*^T (n x d)."""
        return self.projected @ self.basis.columns.T

    # wall-clock timings are deliberately left out of equality
    def __eq__(self, other):
        if not isinstance(other, Coreset):
            return NotImplemented
        return (self.basis == other.basis
                and np.array_equal(self.projected, other.projected)
                and _same_float(self.tail_energy, other.tail_energy)
                and self.params == other.params
                and (self.seed, self.delta_mode, self.method, self.problem, self.nnz,
                     self.sketch_rows) == (other.seed, other.delta_mode, other.method,
                                           other.problem, other.nnz, other.sketch_rows)
                and _same_float(self.frob_sq, other.frob_sq))

    __hash__ = None


def _same_float(a: float, b: float) -> bool:
    return struct.pack("<d", a) == struct.pack("<d", b)


def estimate_tail_energy(A, basis: OrthonormalBasis) -> float:
    """||A - A R R^T||_F^2 computed as max(0, ||A||_F^2 - ||A R||_F^2)."""
    A = as_data_matrix(A)
    if basis.rank == A.d:
        return 0.0
    proj = project_rows(A, basis)
    return max(0.0, frobenius_norm_sq(A) - float(np.sum(proj * proj)))


def _tail_from_parts(frob_sq: float, projected: np.ndarray, rank: int, d: int) -> float:
    # a full-rank basis is the identity projection: no tail at all
    if rank == d:
        return 0.0
    return max(0.0, frob_sq - float(np.sum(projected * projected)))


def _randomized(A, params: CoresetParams, m: int, seed: int, delta_mode: str,
                problem: str, block_rows: int) -> Coreset:
    if delta_mode not in ("estimated", "exact"):
        raise ValueError(f"unknown delta_mode {delta_mode!r}")
    t_start = time.perf_counter()
    sk = SketchParams(m, params.effective_sketch_epsilon, params.delta, params.constant)
    low = two_pass_low_rank_basis(A, sk, seed, block_rows=block_rows)
    if delta_mode == "exact":
        if not isinstance(A, DataMatrix):
            raise ValueError("exact tail energy needs the matrix in memory")
        tail = best_rank_m_residual(full_svd(A), low.rank)
    else:
        tail = _tail_from_parts(low.frob_sq, low.projected, low.rank, low.basis.ambient_dim)
    total = time.perf_counter() - t_start
    t = low.timings
    timings = PhaseTimings(total, t["sketch"], t["orthonormalize"], t["small_svd"],
                           t["projection"])
    return Coreset(low.basis, low.projected, tail, params, int(seed), delta_mode,
                   "randomized", problem, low.frob_sq, low.nnz, low.sketch_rows, timings)


def build_projective_coreset(A, p: CoresetParams, seed: int, delta_mode: str = "estimated",
                             block_rows: int = DEFAULT_BLOCK_ROWS) -> Coreset:
    """Randomized dimensionality reduction for (k, j)-projective clustering.

    ``A`` is a DataMatrix/array or a streaming row source with known ``d``
    (and optionally ``n``). The row-count precondition on a stream whose
    length is unknown up front is checked once its first pass has finished.

    The result is bit-identical for in-memory and streamed input as long as
    both use the same ``block_rows``; other block sizes change the float
    summation order.
    """
    n = getattr(A, "n", None) if hasattr(A, "iter_blocks") else as_data_matrix(A).n
    if not hasattr(A, "iter_blocks"):
        A = as_data_matrix(A)
    d = A.d
    p.validate_shape(n, d)
    m = projective_rank(p, d)
    if n is not None:
        m = min(m, n)
    cs = _randomized(A, p, m, seed, delta_mode, "projective", block_rows)
    p.validate_shape(cs.n, d)
    return cs


def build_subspace_coreset(A, j: int, epsilon: float, delta: float, seed: int,
                           constant: float = 1.0, delta_mode: str = "estimated",
                           block_rows: int = DEFAULT_BLOCK_ROWS) -> Coreset:
    """Coreset for j-subspace clustering on rank ceil(j/epsilon)."""
    A = as_data_matrix(A)
    if not 1 <= j < A.d:
        raise PreconditionError(f"1 <= j < d violated: j = {j}, d = {A.d}")
    params = CoresetParams(1, j, epsilon, delta, constant=constant)
    m = min(subspace_rank(j, epsilon, A.d), A.n)
    return _randomized(A, params, m, seed, delta_mode, "subspace", block_rows)


def exact_svd_coreset(A, p: CoresetParams) -> Coreset:
    """Deterministic baseline: project onto the exact top right singular vectors."""
    A = as_data_matrix(A)
    p.validate_shape(A.n, A.d)
    t_start = time.perf_counter()
    svd = full_svd(A)
    t_svd = time.perf_counter() - t_start
    m = min(projective_rank(p, A.d), svd.right.shape[1])
    basis = OrthonormalBasis(svd.right[:, :m])
    t0 = time.perf_counter()
    projected = project_rows(A, basis)
    projected.flags.writeable = False
    t_proj = time.perf_counter() - t0
    tail = 0.0 if m == A.d else best_rank_m_residual(svd, m)
    total = time.perf_counter() - t_start
    return Coreset(basis, projected, tail, p, 0, "exact", "exact", "projective",
                   frobenius_norm_sq(A), A.nnz, 0,
                   PhaseTimings(total, 0.0, 0.0, t_svd, t_proj))


def coreset_cost(c: Coreset, C: ClosedSet) -> float:
    """dist^2(A*, C) + Delta*, evaluated in the coreset's m*-dim coordinates."""
    if C.ambient_dim != c.d:
        raise ValueError(f"closed set lives in R^{C.ambient_dim}, coreset in R^{c.d}")
    if C.k > c.params.k or C.max_dim > c.params.j:
        raise ValueError(
            f"closed set ({C.k} subspaces, max dim {C.max_dim}) exceeds the "
            f"(k={c.params.k}, j={c.params.j}) the coreset was built for")
    if C.max_dim < 1:
        raise ValueError("closed sets of 0-dimensional subspaces are outside the guarantee")
    return dist2_coords_to_closedset(c.projected, c.basis, C) + c.tail_energy


# Binary layout (little endian): header then basis (d x m*) and projected
# (n x m*) as row-major float64.
MAGIC = b"PCOR"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sH")
_BODY = struct.Struct("<QQQQQdddQBBBBqddQdQddddd")
_MODES = ("estimated", "exact")
_METHODS = ("randomized", "exact")
_PROBLEMS = ("projective", "subspace")


def serialize_coreset(c: Coreset) -> bytes:
    p = c.params
    nan = float("nan")
    header = _PREFIX.pack(MAGIC, FORMAT_VERSION) + _BODY.pack(
        c.n, c.d, c.rank, p.k, p.j, p.epsilon, p.delta, c.tail_energy, c.seed,
        _MODES.index(c.delta_mode), _METHODS.index(c.method), _PROBLEMS.index(c.problem),
        int(p.affine), -1 if p.rank_override is None else p.rank_override,
        p.constant, nan if p.sketch_epsilon is None else p.sketch_epsilon,
        c.sketch_rows, c.frob_sq, c.nnz,
        c.timings.total, c.timings.sketch, c.timings.orthonormalize,
        c.timings.small_svd, c.timings.projection)
    return b"".join([
        header,
        np.ascontiguousarray(c.basis.columns, dtype="<f8").tobytes(),
        np.ascontiguousarray(c.projected, dtype="<f8").tobytes(),
    ])


def deserialize_coreset(data: bytes) -> Coreset:
    data = bytes(data)
    if len(data) < _PREFIX.size:
        raise CoresetFormatError("truncated header", len(data))
    magic, version = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise CoresetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise CoresetFormatError(
            f"unsupported format version {version} (this reader handles version "
            f"{FORMAT_VERSION})", 4)
    off = _PREFIX.size
    if len(data) < off + _BODY.size:
        raise CoresetFormatError("truncated header", len(data))
    (n, d, m, k, j, eps, delta, tail, seed, mode, method, problem, affine, override,
     constant, sk_eps, sketch_rows, frob_sq, nnz, *times) = _BODY.unpack_from(data, off)
    off += _BODY.size
    codes = (("delta_mode", mode, _MODES), ("method", method, _METHODS),
             ("problem", problem, _PROBLEMS))
    for i, (name, code, table) in enumerate(codes):
        if code >= len(table):
            raise CoresetFormatError(f"invalid {name} code {code}", _PREFIX.size + 72 + i)
    if m > d:
        raise CoresetFormatError(f"rank {m} exceeds dimension {d}", _PREFIX.size + 16)
    need = off + 8 * (d * m + n * m)
    if len(data) != need:
        where = min(len(data), need)
        raise CoresetFormatError(
            f"payload is {len(data) - off} bytes, expected {need - off}", where)
    basis = np.frombuffer(data, dtype="<f8", count=d * m, offset=off).reshape(d, m)
    off += 8 * d * m
    projected = np.frombuffer(data, dtype="<f8", count=n * m, offset=off).reshape(n, m)
    projected = projected.astype(np.float64)
    projected.flags.writeable = False
    params = CoresetParams(int(k), int(j), eps, delta, bool(affine),
                           None if override < 0 else int(override), constant,
                           None if math.isnan(sk_eps) else sk_eps)
    return Coreset(OrthonormalBasis(basis.astype(np.float64)), projected, tail, params,
                   int(seed), _MODES[mode], _METHODS[method], _PROBLEMS[problem], frob_sq,
                   int(nnz), int(sketch_rows), PhaseTimings(*times))
