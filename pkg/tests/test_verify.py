import math

import numpy as np
import pytest

from pcoreset.coreset import (
    CoresetParams,
    build_projective_coreset,
    build_subspace_coreset,
    exact_svd_coreset,
)
from pcoreset.geometry import ClosedSet, Subspace, random_closed_set
from pcoreset.matrix_core import OrthonormalBasis, full_svd
from pcoreset.verify import (
    BoundReport,
    check_lemma2_bound,
    check_lemma3,
    check_projection_chain,
    check_psd_gap,
    check_theorem1,
    psd_gap_spectrum,
    run_suite,
)


def test_theorem1_exact_coreset_is_zero_error(rng):
    A = rng.standard_normal((40, 10))
    cs = build_projective_coreset(A, CoresetParams(1, 1, 0.5, 0.1, rank_override=10), 0)
    C = random_closed_set(10, 1, 1, affine=True, seed=2)
    assert check_theorem1(A, cs, C) == pytest.approx(0.0, abs=1e-10)


def test_theorem1_degenerate_zero_cost():
    A = np.zeros((6, 4))
    A[:, 0] = np.arange(1, 7)
    cs = exact_svd_coreset(A, CoresetParams(1, 1, 0.5, 0.1, rank_override=1))
    C = ClosedSet((Subspace(OrthonormalBasis(np.eye(4)[:, :1])),))
    assert math.isnan(check_theorem1(A, cs, C))


def test_lemma2_identity_basis():
    A = np.arange(12.0).reshape(4, 3)
    X = np.eye(3)[:, :1]
    chk = check_lemma2_bound(A, OrthonormalBasis(np.eye(3)), X, 0.5)
    assert chk.value == pytest.approx(0.0) and chk.lower_ok and chk.upper_ok


def test_lemma2_empty_basis_violates():
    A = np.diag([3.0, 1.0, 0.0])
    X = np.eye(3)[:, :1]
    chk = check_lemma2_bound(A, OrthonormalBasis(np.zeros((3, 0))), X, 0.1)
    # ||AX||^2 = 9 exceeds 2 * 0.1 * 1
    assert chk.value == pytest.approx(9.0)
    assert chk.bound == pytest.approx(0.2)
    assert not chk.upper_ok


def test_psd_gap_nonnegative_for_exact_projection(rng):
    A = rng.standard_normal((20, 8))
    basis = OrthonormalBasis(full_svd(A).right[:, :3])
    assert check_psd_gap(A, basis) >= -1e-10 * np.sum(A ** 2)


def test_psd_gap_zero_for_identity_basis():
    A = np.diag([2.0, 1.0])
    spec = psd_gap_spectrum(A, OrthonormalBasis(np.eye(2)))
    assert np.allclose(spec, 0.0)
    assert check_psd_gap(A, OrthonormalBasis(np.eye(2))) == pytest.approx(0.0, abs=1e-12)


def test_psd_gap_refuses_large_d():
    with pytest.raises(ValueError, match="exceeds"):
        psd_gap_spectrum(np.zeros((2, 501)), OrthonormalBasis(np.zeros((501, 0))))


def test_lemma3_exact_for_full_basis(rng):
    A = rng.standard_normal((30, 12))
    cs = build_projective_coreset(A, CoresetParams(1, 1, 0.5, 0.1, rank_override=12), 0)
    X = OrthonormalBasis(np.linalg.qr(rng.standard_normal((12, 4)))[0])
    chk = check_lemma3(A, cs, X)
    assert chk.value == pytest.approx(0.0, abs=1e-20) and chk.holds


def test_projection_chain_exact_basis(rng):
    A = rng.standard_normal((40, 30))
    svd = full_svd(A)
    chk = check_projection_chain(A, OrthonormalBasis(svd.right[:, :6]), 3, 0.0, svd=svd)
    # for the exact basis every term equals sigma_{m+1..m+j}^2
    want = float(np.sum(svd.singular_values[6:9] ** 2))
    assert chk.top_j == pytest.approx(want)
    assert chk.middle == pytest.approx(want)
    assert chk.rhs == pytest.approx(want)
    assert chk.holds


def test_projection_chain_random_basis(rng):
    A = rng.standard_normal((40, 30))
    cs = build_subspace_coreset(A, 3, 0.5, 0.1, seed=1)
    chk = check_projection_chain(A, cs.basis, 3, 0.5)
    assert chk.top_j <= chk.middle * (1 + 1e-9)


def test_report_render():
    rep = BoundReport("theorem1", trials=10, violations=1, max_relative_error=0.3,
                      epsilon_budget=0.5, seeds_used=[1, 2], seeds_passed=1, passed=False)
    assert rep.render().startswith("[FAIL] theorem1: 1/10 violations")
    kv = dict(line.split("=") for line in rep.key_values().splitlines())
    assert kv["theorem1.passed"] == "0" and kv["theorem1.seeds"] == "2"


def test_run_suite_full_rank_passes(rng):
    A = rng.standard_normal((40, 12))
    p = CoresetParams(2, 1, 0.5, 0.1, affine=True, rank_override=12)
    reports = run_suite(A, p, n_closed_sets=5, n_seeds=4, master_seed=3)
    names = [r.name for r in reports]
    assert names == ["theorem1", "lemma3", "tail_consistency", "psd_gap", "theorem1_exact_baseline"]
    assert all(r.passed for r in reports)
    assert all(r.violations == 0 for r in reports)
    assert reports[0].trials == 20


def test_run_suite_deterministic(rng):
    A = rng.standard_normal((40, 12))
    p = CoresetParams(1, 1, 0.5, 0.1, rank_override=4)
    a = run_suite(A, p, 3, 3, 11)
    b = run_suite(A, p, 3, 3, 11)
    assert [r.key_values() for r in a] == [r.key_values() for r in b]


def test_run_suite_detects_underfit():
    # heavy, flat spectrum with a rank-1 projection cannot meet a tight budget
    rng = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng.standard_normal((60, 20)))
    V, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    s = np.r_[100.0, np.full(19, 10.0)]
    A = U @ np.diag(s) @ V.T
    p = CoresetParams(2, 2, 0.05, 0.1, rank_override=1)
    reports = {r.name: r for r in run_suite(A, p, 10, 3, 0)}
    assert not reports["lemma3"].passed
    assert reports["tail_consistency"].passed


def test_run_suite_rejects_empty():
    A = np.random.default_rng(0).standard_normal((20, 8))
    with pytest.raises(ValueError):
        run_suite(A, CoresetParams(1, 1, 0.5, 0.1), 0, 2, 0)
    with pytest.raises(ValueError):
        run_suite(A, CoresetParams(1, 1, 0.5, 0.1), 2, 0, 0)
