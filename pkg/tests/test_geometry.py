import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pcoreset.geometry import (
    ClosedSet,
    Subspace,
    check_weak_triangle,
    closed_set_from_bases,
    dist2_coords_to_closedset,
    dist2_matrix_to_closedset,
    dist2_point_to_closedset,
    dist2_point_to_subspace,
    dumps_closed_set,
    loads_closed_set,
    random_closed_set,
)
from pcoreset.matrix_core import OrthonormalBasis, orthonormalize


def residual_oracle(p, L):
    X = L.basis.columns
    v = p - (L.offset if L.affine else 0.0)
    r = v - X @ (X.T @ v)
    return float(r @ r)


def line(d, axis):
    return Subspace(OrthonormalBasis(np.eye(d)[:, [axis]]))


class TestPointToSubspace:
    def test_inside(self, rng):
        L = random_closed_set(6, 1, 2, seed=1).subspaces[0]
        p = L.basis.columns @ rng.standard_normal(2)
        assert dist2_point_to_subspace(p, L) == pytest.approx(0.0, abs=1e-12)

    def test_axis_example(self):
        assert dist2_point_to_subspace([1.0, 0.0], line(2, 1)) == pytest.approx(1.0)

    def test_matches_residual(self, rng):
        for affine in (False, True):
            C = random_closed_set(9, 3, 3, affine=affine, offset_scale=2.0, seed=4)
            for L in C.subspaces:
                p = rng.standard_normal(9) * 3
                assert dist2_point_to_subspace(p, L) == pytest.approx(
                    residual_oracle(p, L), rel=1e-10)

    def test_never_negative(self, rng):
        L = Subspace(OrthonormalBasis(np.eye(3)))
        assert dist2_point_to_subspace(rng.standard_normal(3) * 1e8, L) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dist2_point_to_subspace(np.ones(3), line(2, 0))


class TestClosedSet:
    def test_point_on_member(self, rng):
        C = random_closed_set(5, 3, 2, seed=2)
        p = C.subspaces[1].basis.columns @ rng.standard_normal(2)
        assert dist2_point_to_closedset(p, C) == pytest.approx(0.0, abs=1e-12)

    def test_duplicate_subspace_idempotent(self, rng):
        L = random_closed_set(5, 1, 2, seed=3).subspaces[0]
        p = rng.standard_normal(5)
        assert dist2_point_to_closedset(p, ClosedSet((L, L))) == dist2_point_to_closedset(
            p, ClosedSet((L,)))

    def test_min_over_members(self, rng):
        C = random_closed_set(7, 4, 2, affine=True, seed=5)
        p = rng.standard_normal(7)
        assert dist2_point_to_closedset(p, C) == pytest.approx(
            min(residual_oracle(p, L) for L in C.subspaces), rel=1e-10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ClosedSet(())

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError):
            ClosedSet((line(2, 0), line(3, 0)))

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError):
            Subspace(OrthonormalBasis(np.array([[2.0], [0.0]])))


class TestMatrixDistance:
    def test_rows_inside(self, rng):
        C = random_closed_set(6, 2, 2, seed=7)
        A = rng.standard_normal((10, 2)) @ C.subspaces[0].basis.columns.T
        assert dist2_matrix_to_closedset(A, C) == pytest.approx(0.0, abs=1e-10)

    def test_single_subspace_is_complement_norm(self, rng):
        A = rng.standard_normal((25, 8))
        C = random_closed_set(8, 1, 3, seed=8)
        perp = OrthonormalBasis(C.subspaces[0].basis.columns).complement().columns
        assert dist2_matrix_to_closedset(A, C) == pytest.approx(np.sum((A @ perp) ** 2), rel=1e-8)

    def test_identity_rows(self):
        C = ClosedSet((line(2, 0),))
        assert dist2_matrix_to_closedset(np.eye(2), C) == pytest.approx(1.0)

    def test_row_sum_of_point_distances(self, rng):
        A = rng.standard_normal((12, 6))
        C = random_closed_set(6, 3, 2, affine=True, seed=9)
        ref = sum(dist2_point_to_closedset(a, C) for a in A)
        assert dist2_matrix_to_closedset(A, C) == pytest.approx(ref, rel=1e-10)

    def test_sparse_matches_dense(self):
        S = sp.random(40, 15, density=0.2, random_state=5, format="csr")
        C = random_closed_set(15, 2, 3, affine=True, seed=10)
        assert dist2_matrix_to_closedset(S, C) == pytest.approx(
            dist2_matrix_to_closedset(S.toarray(), C), rel=1e-10)

    def test_coordinates_match_reconstruction(self, rng):
        frame = orthonormalize(rng.standard_normal((10, 4)))
        coords = rng.standard_normal((20, 4))
        C = random_closed_set(10, 2, 2, affine=True, seed=11)
        full = coords @ frame.columns.T
        assert dist2_coords_to_closedset(coords, frame, C) == pytest.approx(
            dist2_matrix_to_closedset(full, C), rel=1e-8)


class TestRandomClosedSet:
    def test_invariants(self):
        C = random_closed_set(8, 3, 2, affine=True, seed=0)
        assert C.k == 3 and C.ambient_dim == 8 and C.max_dim == 2
        for L in C.subspaces:
            assert L.basis.orthonormality_error() < 1e-10
            assert L.affine

    def test_reproducible(self):
        assert random_closed_set(6, 2, 3, True, 1.0, seed=42) == random_closed_set(
            6, 2, 3, True, 1.0, seed=42)
        assert random_closed_set(6, 2, 3, seed=42) != random_closed_set(6, 2, 3, seed=43)

    def test_full_dimension(self, rng):
        C = random_closed_set(4, 1, 4, seed=1)
        assert dist2_point_to_closedset(rng.standard_normal(4), C) == pytest.approx(0, abs=1e-12)

    def test_offset_scale(self):
        C = random_closed_set(400, 1, 1, affine=True, offset_scale=3.0, seed=1)
        assert np.std(C.subspaces[0].offset) == pytest.approx(3.0, rel=0.15)


class TestTextFormat:
    def test_round_trip(self):
        C = random_closed_set(5, 3, 2, affine=True, seed=3)
        C2 = loads_closed_set(dumps_closed_set(C))
        assert C2 == C

    def test_mixed_round_trip(self, rng):
        lin = random_closed_set(4, 1, 1, seed=1).subspaces[0]
        aff = random_closed_set(4, 1, 2, affine=True, seed=2).subspaces[0]
        C = ClosedSet((lin, aff))
        assert loads_closed_set(dumps_closed_set(C)) == C

    def test_bad_line_reports_position(self):
        with pytest.raises(ValueError, match="line 3"):
            loads_closed_set("closedset 2 1\nsubspace 1 linear\n1.0 2.0\n0.0\n")

    def test_truncated(self):
        with pytest.raises(ValueError, match="ends early"):
            loads_closed_set("closedset 2 1\nsubspace 1 linear\n1.0\n")

    def test_from_bases(self):
        C = closed_set_from_bases([np.eye(3)[:, :1]], [np.ones(3)])
        assert C.affine


class TestWeakTriangle:
    def test_equal_points(self, rng):
        C = random_closed_set(5, 2, 2, seed=1)
        p = rng.standard_normal(5)
        res = check_weak_triangle(p, p, C, 0.3)
        assert res.lhs == 0.0 and res.holds

    def test_q_in_set(self, rng):
        C = random_closed_set(5, 2, 2, affine=True, seed=1)
        L = C.subspaces[0]
        q = L.basis.columns @ rng.standard_normal(2) + L.offset
        assert check_weak_triangle(rng.standard_normal(5) * 4, q, C, 0.1).holds

    def test_randomized_no_exceptions(self, rng):
        for t in range(10_000):
            d = (5, 20, 100)[t % 3]
            k = int(rng.integers(1, 4))
            j = int(rng.integers(1, min(d, 5) + 1))
            C = random_closed_set(d, k, j, affine=bool(t % 2), offset_scale=2.0,
                                  seed=rng.integers(2 ** 32))
            p = rng.standard_normal(d) * rng.uniform(0.1, 10)
            q = p + rng.standard_normal(d) * rng.uniform(1e-3, 10)
            eps = float(rng.uniform(1e-3, 0.999))
            assert check_weak_triangle(p, q, C, eps).holds

    def test_invalid_eps(self):
        C = random_closed_set(3, 1, 1, seed=0)
        with pytest.raises(ValueError):
            check_weak_triangle(np.ones(3), np.ones(3), C, 1.0)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(2, 10), alpha=st.floats(-50, 50))
def test_scale_covariance_linear(seed, d, alpha):
    rng = np.random.default_rng(seed)
    C = random_closed_set(d, 2, max(1, d // 2), seed=seed)
    p = rng.standard_normal(d)
    assert dist2_point_to_closedset(alpha * p, C) == pytest.approx(
        alpha ** 2 * dist2_point_to_closedset(p, C), rel=1e-9, abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(2, 10), affine=st.booleans())
def test_rotation_invariance(seed, d, affine):
    rng = np.random.default_rng(seed)
    C = random_closed_set(d, 3, max(1, d - 1), affine=affine, seed=seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    rotated = ClosedSet(tuple(
        Subspace(OrthonormalBasis(Q @ L.basis.columns), None if L.offset is None else Q @ L.offset)
        for L in C.subspaces))
    p = rng.standard_normal(d)
    a = dist2_point_to_closedset(Q @ p, rotated)
    b = dist2_point_to_closedset(p, C)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-10)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(2, 10))
def test_nonnegative_and_zero_on_membership(seed, d):
    rng = np.random.default_rng(seed)
    C = random_closed_set(d, 2, max(1, d // 2), affine=True, seed=seed)
    assert dist2_point_to_closedset(rng.standard_normal(d) * 5, C) >= 0.0
    L = C.subspaces[1]
    member = L.basis.columns @ rng.standard_normal(L.dim) + L.offset
    assert dist2_point_to_closedset(member, C) <= 1e-10 * (1 + member @ member)
