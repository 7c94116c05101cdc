"""Randomized vs exact-SVD coreset timing over a grid of problem shapes."""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .coreset import (
    CoresetParams,
    PreconditionError,
    build_projective_coreset,
    coreset_cost,
    exact_svd_coreset,
)
from .geometry import dist2_matrix_to_closedset, random_closed_set
from .matrix_core import DataMatrix

_ENTRY = re.compile(r"^\s*(\d+)\s*x\s*(\d+)\s*@\s*([0-9.eE+-]+)\s*:\s*(\d+)\s*$")


@dataclass(frozen=True)
class GridEntry:
    n: int
    d: int
    density: float
    rank: int


def parse_grid(text: str) -> list[GridEntry]:
    """Parse ``"NxD@DENSITY:RANK,..."``, e.g. ``"2000x500@0.01:50,2000x500@1:50"``."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        m = _ENTRY.match(item)
        if not m:
            raise ValueError(f"bad grid entry {item!r}; expected NxD@DENSITY:RANK")
        out.append(GridEntry(int(m[1]), int(m[2]), float(m[3]), int(m[4])))
    if not out:
        raise ValueError("empty benchmark grid")
    return out


def random_matrix(n: int, d: int, density: float, seed) -> DataMatrix:
    """Gaussian matrix; CSR with the given fill fraction when density < 1."""
    rng = np.random.default_rng(seed)
    if density >= 1.0:
        return DataMatrix(rng.standard_normal((n, d)))
    if not density > 0.0:
        raise ValueError(f"density must be positive, got {density}")
    mat = sp.random(n, d, density=density, format="csr", random_state=rng,
                    data_rvs=rng.standard_normal)
    return DataMatrix(mat)


@dataclass
class BenchRow:
    n: int
    d: int
    density: float
    nnz: int
    rank: int
    method: str
    sketch_rows: int
    sketch_s: float
    orthonormalize_s: float
    small_svd_s: float
    projection_s: float
    total_s: float
    tail_energy: float
    max_rel_err: float


COLUMNS = list(BenchRow.__dataclass_fields__)


def run_bench(grid, k=1, j=1, epsilon=0.5, delta=0.1, constant=1.0, seed=0,
              n_closed_sets=5, exact=True, notices=None) -> list[BenchRow]:
    """Time both constructions per grid entry and score them on shared closed sets.

    Entries that violate the coreset preconditions are skipped; a message is
    appended to ``notices`` if given.
    """
    rows = []
    rng = np.random.default_rng(seed)
    for entry in grid:
        params = CoresetParams(k, j, epsilon, delta, rank_override=entry.rank,
                               constant=constant)
        try:
            params.validate_shape(entry.n, entry.d)
            if entry.rank > min(entry.n, entry.d):
                raise PreconditionError(
                    f"rank <= min(n, d) violated: rank = {entry.rank}")
        except PreconditionError as exc:
            if notices is not None:
                notices.append(f"skipping {entry}: {exc}")
            continue
        A = random_matrix(entry.n, entry.d, entry.density, rng.integers(0, 2 ** 63))
        sets = [random_closed_set(entry.d, k, j, seed=rng.integers(0, 2 ** 63))
                for _ in range(n_closed_sets)]
        truth = [dist2_matrix_to_closedset(A, C) for C in sets]

        builds = [("randomized", build_projective_coreset(A, params, int(rng.integers(0, 2 ** 63))))]
        if exact:
            builds.append(("exact", exact_svd_coreset(A, params)))
        for method, cs in builds:
            errs = [abs(coreset_cost(cs, C) - t) / t if t > 0 else math.inf
                    for C, t in zip(sets, truth)]
            tm = cs.timings
            rows.append(BenchRow(entry.n, entry.d, entry.density, A.nnz, cs.rank, method,
                                 cs.sketch_rows, tm.sketch, tm.orthonormalize, tm.small_svd,
                                 tm.projection, tm.total, cs.tail_energy,
                                 max(errs) if errs else 0.0))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    """Tab-separated table with a header line."""
    lines = ["\t".join(COLUMNS)]
    for r in rows:
        vals = []
        for v in asdict(r).values():
            vals.append(f"{v:.6g}" if isinstance(v, float) else str(v))
        lines.append("\t".join(vals))
    return "\n".join(lines) + "\n"
