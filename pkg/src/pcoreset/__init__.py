"""Randomized dimensionality-reduction coresets for projective clustering."""
from .coreset import (
    Coreset,
    CoresetParams,
    PreconditionError,
    build_projective_coreset,
    build_subspace_coreset,
    coreset_cost,
    deserialize_coreset,
    estimate_tail_energy,
    exact_svd_coreset,
    projective_rank,
    serialize_coreset,
    subspace_rank,
)
from .geometry import ClosedSet, Subspace, dist2_matrix_to_closedset, random_closed_set
from .matrix_core import DataMatrix, OrthonormalBasis, full_svd, orthonormalize
from .sketching import SketchParams, make_jl_sketch, sketch_dim, two_pass_low_rank_basis

__version__ = "0.1.0"
