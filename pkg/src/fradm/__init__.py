"""Robust sparse + fixed-rank matrix decomposition.

Recovers ``M = L + S`` with ``rank(L) = r`` and sparse ``S`` using an
alternating-direction scheme whose rank projection is a warm-started polar
factorization step instead of a truncated SVD.
"""

from .decomp import (
    AdmConfig,
    Decomposition,
    KktResiduals,
    NystromConfig,
    Projection,
    fr_adm,
    fr_adm_exact,
    fr_nys,
    kkt_residuals,
)
from .errors import (
    BlockRankDeficient,
    DecompositionError,
    InvalidFraction,
    InvalidRank,
    NonFinite,
    NonSquare,
    NotConvergedWarning,
    RankDeficient,
    ShapeMismatch,
)
from .fixedrank import (
    ConvergenceTrace,
    FixedRankConfig,
    PolarFactors,
    fixed_rank_opt_full,
    fixed_rank_opt_step,
    reconstruct,
    subspace_distance,
)
from .manifold import project_spd, project_stiefel, soft_threshold, tsvd_oracle
from .synth import RecoveryMetrics, SyntheticProblem, generate_problem, phase_metric, recovery_errors

__version__ = "0.1.0"

__all__ = [
    "AdmConfig",
    "BlockRankDeficient",
    "ConvergenceTrace",
    "Decomposition",
    "DecompositionError",
    "FixedRankConfig",
    "InvalidFraction",
    "InvalidRank",
    "KktResiduals",
    "NonFinite",
    "NonSquare",
    "NotConvergedWarning",
    "NystromConfig",
    "PolarFactors",
    "Projection",
    "RankDeficient",
    "RecoveryMetrics",
    "ShapeMismatch",
    "SyntheticProblem",
    "fixed_rank_opt_full",
    "fixed_rank_opt_step",
    "fr_adm",
    "fr_adm_exact",
    "fr_nys",
    "generate_problem",
    "kkt_residuals",
    "phase_metric",
    "project_spd",
    "project_stiefel",
    "reconstruct",
    "recovery_errors",
    "soft_threshold",
    "subspace_distance",
    "tsvd_oracle",
]
