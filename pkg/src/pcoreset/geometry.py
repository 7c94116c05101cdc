"""Closed sets made of linear or affine subspaces, and exact squared distances to them.

Distances use the short form ``||p - o||^2 - ||X^T (p - o)||^2``; tests
check it against the explicit residual ``(I - X X^T)(p - o)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .matrix_core import OrthonormalBasis, as_data_matrix, multiply, orthonormalize


NEG_CLAMP = 1e-12
BASIS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Subspace:
    basis: OrthonormalBasis
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        basis = self.basis
        if not isinstance(basis, OrthonormalBasis):
            basis = OrthonormalBasis(np.asarray(basis, dtype=np.float64))
            object.__setattr__(self, "basis", basis)
        if basis.orthonormality_error() > BASIS_TOL:
            raise ValueError("subspace basis is not orthonormal")
        if self.offset is not None:
            off = np.array(self.offset, dtype=np.float64).ravel()
            if off.shape != (basis.ambient_dim,):
                raise ValueError(
                    f"offset has length {off.size}, expected {basis.ambient_dim}")
            if not np.all(np.isfinite(off)):
                raise ValueError("offset contains non-finite values")
            off.flags.writeable = False
            object.__setattr__(self, "offset", off)

    @property
    def ambient_dim(self) -> int:
        return self.basis.ambient_dim

    @property
    def dim(self) -> int:
        return self.basis.rank

    @property
    def affine(self) -> bool:
        return self.offset is not None

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        if self.affine != other.affine:
            return False
        same_off = (not self.affine) or np.array_equal(self.offset, other.offset)
        return same_off and self.basis == other.basis

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ClosedSet:
    subspaces: tuple

    def __post_init__(self):
        subs = tuple(self.subspaces)
        if not subs:
            raise ValueError("a closed set needs at least one subspace")
        dims = {s.ambient_dim for s in subs}
        if len(dims) != 1:
            raise ValueError(f"subspaces disagree on ambient dimension: {sorted(dims)}")
        object.__setattr__(self, "subspaces", subs)

    @property
    def ambient_dim(self) -> int:
        return self.subspaces[0].ambient_dim

    @property
    def k(self) -> int:
        return len(self.subspaces)

    @property
    def max_dim(self) -> int:
        return max(s.dim for s in self.subspaces)

    @property
    def affine(self) -> bool:
        return any(s.affine for s in self.subspaces)

    def __eq__(self, other):
        if not isinstance(other, ClosedSet):
            return NotImplemented
        return self.k == other.k and all(a == b for a, b in zip(self.subspaces, other.subspaces))

    __hash__ = None


def _clamp(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < 0.0, 0.0, x)


def dist2_point_to_subspace(p, L: Subspace) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.shape[0] != L.ambient_dim:
        raise ValueError(f"point has dimension {p.shape[0]}, subspace lives in R^{L.ambient_dim}")
    v = p - L.offset if L.affine else p
    coef = L.basis.columns.T @ v
    return float(_clamp(v @ v - coef @ coef))


def dist2_point_to_closedset(p, C: ClosedSet) -> float:
    return min(dist2_point_to_subspace(p, L) for L in C.subspaces)


def _row_dist2(sq_norms, coords, X, L: Subspace, offset_coords=None, offset_sq=None):
    """Squared distances of many rows to one subspace.

    Rows are given by their squared norms and their coordinates ``coords``
    in some orthonormal frame F (F = identity for raw data). ``X`` is the
    subspace basis expressed in that frame (F^T X). ``offset_coords`` is
    F^T o and ``offset_sq`` is ||o||^2 for affine subspaces.
    """
    proj = coords @ X if X.shape[1] else np.zeros((coords.shape[0], 0))
    if not L.affine:
        return _clamp(sq_norms - np.einsum("ij,ij->i", proj, proj))
    xo = L.basis.columns.T @ L.offset
    shifted = proj - xo
    cross = coords @ offset_coords
    return _clamp(sq_norms - 2.0 * cross + offset_sq - np.einsum("ij,ij->i", shifted, shifted))


def row_dist2_to_closedset(A, C: ClosedSet) -> np.ndarray:
    """Per-row squared distance from A to C (length-n array)."""
    A = as_data_matrix(A)
    if A.d != C.ambient_dim:
        raise ValueError(f"matrix has {A.d} columns, closed set lives in R^{C.ambient_dim}")
    if A.is_sparse:
        sq = np.asarray(A.raw.multiply(A.raw).sum(axis=1)).ravel()
    else:
        sq = np.einsum("ij,ij->i", A.raw, A.raw)
    best = None
    for L in C.subspaces:
        X = L.basis.columns
        proj = multiply(A, X) if X.shape[1] else np.zeros((A.n, 0))
        if L.affine:
            xo = X.T @ L.offset
            shifted = proj - xo
            cross = multiply(A, L.offset).ravel()
            dist = _clamp(sq - 2.0 * cross + L.offset @ L.offset
                          - np.einsum("ij,ij->i", shifted, shifted))
        else:
            dist = _clamp(sq - np.einsum("ij,ij->i", proj, proj))
        best = dist if best is None else np.minimum(best, dist)
    return best


def dist2_matrix_to_closedset(A, C: ClosedSet) -> float:
    return float(np.sum(row_dist2_to_closedset(A, C)))


def dist2_coords_to_closedset(coords: np.ndarray, frame: OrthonormalBasis, C: ClosedSet) -> float:
    """Squared distance of the rows ``coords @ frame^T`` to C, computed
    without leaving the frame's coordinates."""
    if frame.ambient_dim != C.ambient_dim:
        raise ValueError(f"frame lives in R^{frame.ambient_dim}, closed set in R^{C.ambient_dim}")
    F = frame.columns
    sq = np.einsum("ij,ij->i", coords, coords)
    best = None
    for L in C.subspaces:
        X = F.T @ L.basis.columns
        if L.affine:
            dist = _row_dist2(sq, coords, X, L, F.T @ L.offset, float(L.offset @ L.offset))
        else:
            dist = _row_dist2(sq, coords, X, L)
        best = dist if best is None else np.minimum(best, dist)
    return float(np.sum(best))


def random_subspace(d: int, j: int, rng: np.random.Generator, affine=False,
                    offset_scale=1.0) -> Subspace:
    if not 0 <= j <= d:
        raise ValueError(f"subspace dimension {j} must lie in [0, {d}]")
    basis = orthonormalize(rng.standard_normal((d, j))) if j else OrthonormalBasis(np.zeros((d, 0)))
    offset = offset_scale * rng.standard_normal(d) if affine else None
    return Subspace(basis, offset)


def random_closed_set(d: int, k: int, j: int, affine: bool = False,
                      offset_scale: float = 1.0, seed=None) -> ClosedSet:
    """k independent Gaussian-drawn j-subspaces of R^d (offsets N(0, offset_scale^2 I) if affine)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    return ClosedSet(tuple(random_subspace(d, j, rng, affine, offset_scale) for _ in range(k)))


@dataclass(frozen=True)
class TriangleCheck:
    lhs: float
    rhs: float
    holds: bool


def check_weak_triangle(p, q, C: ClosedSet, eps_bar: float) -> TriangleCheck:
    """|dist^2(p,C) - dist^2(q,C)| <= 12 ||p-q||^2 / eps + (eps/2) dist^2(p,C)."""
    if not 0.0 < eps_bar < 1.0:
        raise ValueError(f"eps_bar must lie in (0, 1), got {eps_bar}")
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    dp = dist2_point_to_closedset(p, C)
    dq = dist2_point_to_closedset(q, C)
    diff = p - q
    lhs = abs(dp - dq)
    rhs = 12.0 * float(diff @ diff) / eps_bar + 0.5 * eps_bar * dp
    return TriangleCheck(lhs, rhs, lhs <= rhs + 1e-9 * (1.0 + rhs))


# Text format, one block per subspace:
#
#   closedset <d> <k>
#   subspace <j> linear|affine
#   offset v_1 ... v_d          (affine only)
#   <d lines of j values>       (basis rows)
#
# Values are written with repr() so a round trip is exact.

def dumps_closed_set(C: ClosedSet) -> str:
    out = [f"closedset {C.ambient_dim} {C.k}"]
    for L in C.subspaces:
        out.append(f"subspace {L.dim} {'affine' if L.affine else 'linear'}")
        if L.affine:
            out.append("offset " + " ".join(repr(float(v)) for v in L.offset))
        for row in L.basis.columns:
            out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def loads_closed_set(text: str) -> ClosedSet:
    lines = [ln.strip() for ln in text.splitlines()]
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and (not lines[pos] or lines[pos].startswith("#")):
            pos += 1
        if pos >= len(lines):
            raise ValueError(f"closed set text ends early at line {pos + 1}")
        pos += 1
        return pos, lines[pos - 1].split()

    def floats(lineno, toks, count):
        if len(toks) != count:
            raise ValueError(f"line {lineno}: expected {count} values, got {len(toks)}")
        try:
            return [float(t) for t in toks]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None

    lineno, head = next_line()
    if len(head) != 3 or head[0] != "closedset":
        raise ValueError(f"line {lineno}: expected 'closedset <d> <k>'")
    d, k = int(head[1]), int(head[2])
    subs = []
    for _ in range(k):
        lineno, toks = next_line()
        if len(toks) != 3 or toks[0] != "subspace" or toks[2] not in ("linear", "affine"):
            raise ValueError(f"line {lineno}: expected 'subspace <j> linear|affine'")
        j = int(toks[1])
        offset = None
        if toks[2] == "affine":
            lineno, toks = next_line()
            if not toks or toks[0] != "offset":
                raise ValueError(f"line {lineno}: expected an offset line")
            offset = np.array(floats(lineno, toks[1:], d))
        rows = [floats(*next_line(), j) for _ in range(d)]
        subs.append(Subspace(OrthonormalBasis(np.array(rows).reshape(d, j)), offset))
    return ClosedSet(tuple(subs))


def closed_set_from_bases(bases: Sequence, offsets: Optional[Sequence] = None) -> ClosedSet:
    offsets = offsets if offsets is not None else [None] * len(bases)
    return ClosedSet(tuple(Subspace(OrthonormalBasis(np.asarray(b)), o)
                           for b, o in zip(bases, offsets)))
