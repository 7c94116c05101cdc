"""Executable checks for the coreset guarantees, and a seeded suite runner.

Every slack term is measured relative to ||A||_F^2 so instances of any
scale are comparable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coreset import (
    Coreset,
    CoresetParams,
    build_projective_coreset,
    coreset_cost,
    exact_svd_coreset,
)
from .geometry import ClosedSet, dist2_matrix_to_closedset, random_closed_set, random_subspace
from .matrix_core import (
    OrthonormalBasis,
    as_data_matrix,
    best_rank_m_residual,
    frobenius_norm_sq,
    full_svd,
    multiply,
)

ABS_SLACK = 1e-8
PSD_MAX_DIM = 500
EXACT_BASELINE_MAX_DIM = 2000


def _cols(X) -> np.ndarray:
    if isinstance(X, OrthonormalBasis):
        return X.columns
    if hasattr(X, "basis"):
        return X.basis.columns
    return np.asarray(X, dtype=np.float64)


def check_theorem1(A, coreset: Coreset, C: ClosedSet) -> float:
    """Relative error |cost(coreset, C) - dist^2(A, C)| / dist^2(A, C).

    Returns ``inf`` when the exact cost is zero but the coreset cost is not,
    and ``nan`` when both are zero (a degenerate instance).
    """
    exact = dist2_matrix_to_closedset(A, C)
    approx = coreset_cost(coreset, C)
    if exact == 0.0:
        return math.nan if approx == 0.0 else math.inf
    return abs(approx - exact) / exact


@dataclass(frozen=True)
class Lemma2Check:
    value: float
    bound: float
    lower_ok: bool
    upper_ok: bool


def check_lemma2_bound(A, basis: OrthonormalBasis, X, epsilon: float) -> Lemma2Check:
    """0 <= ||AX||^2 - ||A~X||^2 <= 2 eps ||A X_perp||^2 with A~ = A R R^T."""
    A = as_data_matrix(A)
    X = _cols(X)
    frob = frobenius_norm_sq(A)
    ax = multiply(A, X)
    ax_sq = float(np.sum(ax * ax))
    if basis.rank:
        ar = multiply(A, basis.columns)
        at_x = ar @ (basis.columns.T @ X)
        at_sq = float(np.sum(at_x * at_x))
    else:
        at_sq = 0.0
    value = ax_sq - at_sq
    perp = max(0.0, frob - ax_sq)
    bound = 2.0 * epsilon * perp
    slack = ABS_SLACK * frob
    return Lemma2Check(value, bound, value >= -slack, value <= bound + slack)


def psd_gap_spectrum(A, basis: OrthonormalBasis) -> np.ndarray:
    """Ascending eigenvalues of A^T A - A~^T A~ (dense; small d only)."""
    A = as_data_matrix(A)
    if A.d > PSD_MAX_DIM:
        raise ValueError(f"dense eigensolve refused: d = {A.d} exceeds {PSD_MAX_DIM}")
    dense = A.toarray()
    gram = dense.T @ dense
    if basis.rank:
        tilde = (dense @ basis.columns) @ basis.columns.T
        gram = gram - tilde.T @ tilde
    return np.linalg.eigvalsh((gram + gram.T) / 2.0)


def check_psd_gap(A, basis: OrthonormalBasis) -> float:
    return float(psd_gap_spectrum(A, basis)[0])


@dataclass(frozen=True)
class Lemma3Check:
    value: float
    bound: float
    holds: bool


def check_lemma3(A, coreset: Coreset, X_star) -> Lemma3Check:
    """||(A* - A) X* X*^T||^2 <= (eps^2 / 26) ||A X*_perp||^2."""
    A = as_data_matrix(A)
    X = _cols(X_star)
    frob = frobenius_norm_sq(A)
    ax = multiply(A, X)
    diff = ax - coreset.projected @ (coreset.basis.columns.T @ X)
    value = float(np.sum(diff * diff))
    perp = max(0.0, frob - float(np.sum(ax * ax)))
    bound = coreset.params.epsilon ** 2 / 26.0 * perp
    return Lemma3Check(value, bound, value <= bound + ABS_SLACK * frob)


@dataclass(frozen=True)
class ChainCheck:
    """Terms of ||(A - A~)_j||^2 <= ||A - A~||^2 - tail(m+j) <= (1+eps) tail(m) - tail(m+j)."""

    top_j: float
    middle: float
    rhs: float
    holds: bool


def check_projection_chain(A, basis: OrthonormalBasis, j: int, epsilon: float,
                           svd=None, rtol: float = 1e-6) -> ChainCheck:
    A = as_data_matrix(A)
    svd = svd or full_svd(A)
    m = basis.rank
    dense = A.toarray()
    resid = dense - (dense @ basis.columns) @ basis.columns.T if m else dense
    s = np.linalg.svd(resid, compute_uv=False)
    top_j = float(np.dot(s[:j], s[:j]))
    far_tail = best_rank_m_residual(svd, m + j)
    middle = float(np.dot(s, s)) - far_tail
    rhs = (1.0 + epsilon) * best_rank_m_residual(svd, m) - far_tail
    slack = rtol * abs(rhs) + 1e-12 * frobenius_norm_sq(A)
    return ChainCheck(top_j, middle, rhs, top_j <= middle + slack and middle <= rhs + slack)


@dataclass
class BoundReport:
    name: str
    trials: int = 0
    violations: int = 0
    max_relative_error: float = 0.0
    epsilon_budget: float = 0.0
    seeds_used: list = field(default_factory=list)
    seeds_passed: int = 0
    degenerate: int = 0
    passed: bool = False

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.violations}/{self.trials} violations, "
                f"{self.seeds_passed}/{len(self.seeds_used)} seeds clean, "
                f"max rel err {self.max_relative_error:.3g} (budget {self.epsilon_budget:g})"
                + (f", {self.degenerate} degenerate" if self.degenerate else ""))

    def key_values(self) -> str:
        fields = {
            "trials": self.trials, "violations": self.violations,
            "max_relative_error": repr(self.max_relative_error),
            "epsilon_budget": repr(self.epsilon_budget),
            "seeds": len(self.seeds_used), "seeds_passed": self.seeds_passed,
            "degenerate": self.degenerate, "passed": int(self.passed),
        }
        return "\n".join(f"{self.name}.{k}={v}" for k, v in fields.items())


class _Tally:
    def __init__(self, name, budget):
        self.report = BoundReport(name, epsilon_budget=budget)
        self._seed_bad = False

    def start_seed(self, seed):
        self.report.seeds_used.append(seed)
        self._seed_bad = False

    def record(self, ok: bool, rel: float, degenerate: bool = False):
        r = self.report
        r.trials += 1
        if degenerate:
            r.degenerate += 1
        if not ok:
            r.violations += 1
            self._seed_bad = True
        if not math.isnan(rel):
            r.max_relative_error = max(r.max_relative_error, rel)

    def end_seed(self):
        if not self._seed_bad:
            self.report.seeds_passed += 1

    def finish(self, required_fraction: float) -> BoundReport:
        r = self.report
        n = len(r.seeds_used)
        r.passed = n > 0 and r.seeds_passed >= required_fraction * n - 1e-12
        return r


def _closed_sets(rng, d, params: CoresetParams, count, offset_scale):
    out = []
    for i in range(count):
        affine = params.affine and i % 2 == 1
        out.append(random_closed_set(d, params.k, params.j, affine, offset_scale,
                                     seed=rng.integers(0, 2 ** 63)))
    return out


def run_suite(A, params: CoresetParams, n_closed_sets: int, n_seeds: int, master_seed: int,
              offset_scale: float = 1.0, delta_mode: str = "estimated") -> list[BoundReport]:
    """Build one coreset per derived seed and check it against sampled queries.

    A report passes when the fraction of seeds with zero in-seed violations
    is at least 1 - delta. Builder failures count as violations.
    """
    if n_closed_sets < 1:
        raise ValueError("n_closed_sets must be >= 1")
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    A = as_data_matrix(A)
    params.validate_shape(A.n, A.d)
    frob = frobenius_norm_sq(A)
    eps = params.epsilon
    j_star = min(params.j_star, A.d)
    children = np.random.SeedSequence(master_seed).spawn(n_seeds + 1)

    thm = _Tally("theorem1", eps)
    lem3 = _Tally("lemma3", eps ** 2 / 26.0)
    tail = _Tally("tail_consistency", ABS_SLACK)
    psd = _Tally("psd_gap", ABS_SLACK) if A.d <= PSD_MAX_DIM else None
    tallies = [t for t in (thm, lem3, tail, psd) if t is not None]

    for child in children[:n_seeds]:
        build_seed = int(child.generate_state(1, np.uint64)[0])
        rng = np.random.default_rng(child)
        for t in tallies:
            t.start_seed(build_seed)
        try:
            cs = build_projective_coreset(A, params, build_seed, delta_mode=delta_mode)
        except Exception:
            for t in tallies:
                t.record(False, math.inf)
                t.end_seed()
            continue

        for C in _closed_sets(rng, A.d, params, n_closed_sets, offset_scale):
            err = check_theorem1(A, cs, C)
            thm.record(err <= eps, err, degenerate=math.isnan(err))

        for _ in range(n_closed_sets):
            X = random_subspace(A.d, j_star, rng).basis
            chk = check_lemma3(A, cs, X)
            rel = chk.value / chk.bound if chk.bound > 0 else (0.0 if chk.value == 0 else math.inf)
            lem3.record(chk.holds, rel)

        if delta_mode == "estimated":
            gap = abs(cs.tail_energy + float(np.sum(cs.projected ** 2)) - frob)
            tail.record(gap <= ABS_SLACK * frob, gap / frob if frob else 0.0)
        else:
            tail.record(True, 0.0)

        if psd is not None:
            lam = check_psd_gap(A, cs.basis)
            psd.record(lam >= -ABS_SLACK * frob, max(0.0, -lam) / frob if frob else 0.0)

        for t in tallies:
            t.end_seed()

    need = 1.0 - params.delta
    reports = [t.finish(need) for t in tallies]

    if min(A.n, A.d) <= EXACT_BASELINE_MAX_DIM:
        base = _Tally("theorem1_exact_baseline", eps)
        base.start_seed(0)
        ex = exact_svd_coreset(A, params)
        rng = np.random.default_rng(children[n_seeds])
        for C in _closed_sets(rng, A.d, params, n_closed_sets, offset_scale):
            err = check_theorem1(A, ex, C)
            base.record(err <= eps, err, degenerate=math.isnan(err))
        base.end_seed()
        reports.append(base.finish(1.0))
    return reports
