"""Sparse plus low-rank decomposition of dense weight matrices.

Splits a weight matrix into a pattern-feasible sparse term and explicit
low-rank factors by alternating minimization of the layer-wise
reconstruction error measured through calibration activations.
"""

from .altmin import (
    AltMinConfig,
    decompose_layer,
    get_lr,
    oats_baseline,
    sequential_decompose,
)
from .budget import (
    BudgetError,
    budget_for_rank_ratio,
    effective_params,
    fits_compression,
    rank_for_fixed_compression,
)
from .gram import (
    build_gram,
    dampen,
    diag_scaler,
    hessian_from_matrix,
    inversion_count,
    reset_inversion_count,
)
from .lowrank import (
    AdamState,
    adam_step,
    diag_weighted_lowrank,
    lowrank_gd,
    lowrank_gd_scaled,
    lowrank_gradients,
    numeric_rank,
    truncated_svd,
)
from .pruners import (
    OBS,
    Magnitude,
    PrunerKind,
    Wanda,
    prune_magnitude,
    prune_obs,
    prune_wanda,
    run_pruner,
)
from .types import (
    CalibrationActivations,
    ContractError,
    DecompositionResult,
    Dense,
    DenseWeights,
    GramHessian,
    LowRankFactors,
    NumericError,
    SemiStructured,
    SlrdError,
    SparseComponent,
    SparsityPattern,
    TraceEntry,
    Unstructured,
    mask_satisfies,
    objective_pair,
    quad_form,
    reconstruction_objective,
    validate_pattern,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AltMinConfig",
    "BudgetError",
    "CalibrationActivations",
    "ContractError",
    "DecompositionResult",
    "Dense",
    "DenseWeights",
    "GramHessian",
    "LowRankFactors",
    "Magnitude",
    "NumericError",
    "OBS",
    "PrunerKind",
    "SemiStructured",
    "SlrdError",
    "SparseComponent",
    "SparsityPattern",
    "TraceEntry",
    "Unstructured",
    "Wanda",
    "adam_step",
    "budget_for_rank_ratio",
    "build_gram",
    "dampen",
    "decompose_layer",
    "diag_scaler",
    "diag_weighted_lowrank",
    "effective_params",
    "fits_compression",
    "get_lr",
    "hessian_from_matrix",
    "inversion_count",
    "lowrank_gd",
    "lowrank_gd_scaled",
    "lowrank_gradients",
    "mask_satisfies",
    "numeric_rank",
    "oats_baseline",
    "objective_pair",
    "prune_magnitude",
    "prune_obs",
    "prune_wanda",
    "rank_for_fixed_compression",
    "quad_form",
    "reconstruction_objective",
    "reset_inversion_count",
    "run_pruner",
    "sequential_decompose",
    "truncated_svd",
    "validate_pattern",
]
