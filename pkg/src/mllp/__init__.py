"""Marginal log-linear parameterizations of discrete distributions.

Tools for working with hierarchical marginal parameterizations:
reference-category interactions and marginal mean parameters, mixed
parameter reconstruction, replacement of interactions that later
margins re-constrain, a two-step fixed-point reconstruction for the
replaced terms, and numerical smoothness diagnostics for the resulting
maps.
"""

from .design import (
    DesignMatrix,
    SelectionError,
    TermId,
    TermSelection,
    build_C,
    build_G,
    build_S,
    contrast_row,
    conversion_matrices,
    weighted_projector,
    weighted_projector_span,
)
from .diagnostics import (
    DiagnosticsError,
    RankStats,
    SmoothnessVerdict,
    classify_plan,
    classify_smoothness,
    verify_conversion_structure,
    verify_projector_factorization,
)
from .lm import (
    DegenerateReplacementError,
    LMInputs,
    LMResult,
    compute_Q,
    lm_jacobian,
    lm_reconstruct,
    spectral_radius,
)
from .model import (
    CheckReport,
    MarginBlock,
    MarginResult,
    ModelError,
    ModelSpec,
    NonIdentifiableModelError,
    ParseError,
    PipelineResult,
    check_model,
    matrix_table,
    model_from_dict,
    parse_model,
    run_pipeline,
)
from .params import (
    InfeasibleTargetsError,
    MixedSpec,
    NonConvergenceError,
    ParamVector,
    eta_of,
    fisher_F,
    mixed_solve,
    mu_of,
    p_of_eta,
)
from .replacement import (
    CIStatement,
    ContextConstraint,
    ContextSpec,
    HItem,
    KFamilies,
    ReplacementError,
    ReplacementPlan,
    ValidityReport,
    check_valid_replacement,
    ci_to_interactions,
    construct_full_replacement,
    construct_replacement,
    context_restriction,
    k_families,
    plan_selections,
)
from .tables import (
    CellConfig,
    InvalidCellError,
    InvalidDistributionError,
    InvalidSpecError,
    Margin,
    MllpError,
    ProbVector,
    VariableSpec,
    all_configs,
    cell_index,
    config_of_index,
    marginalize,
    random_distribution,
    uniform_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # tables
    "MllpError",
    "InvalidSpecError",
    "InvalidCellError",
    "InvalidDistributionError",
    "VariableSpec",
    "Margin",
    "CellConfig",
    "ProbVector",
    "cell_index",
    "config_of_index",
    "all_configs",
    "marginalize",
    "random_distribution",
    "uniform_distribution",
    # design
    "SelectionError",
    "TermId",
    "TermSelection",
    "DesignMatrix",
    "contrast_row",
    "build_C",
    "build_G",
    "build_S",
    "conversion_matrices",
    "weighted_projector",
    "weighted_projector_span",
    # params
    "NonConvergenceError",
    "InfeasibleTargetsError",
    "ParamVector",
    "MixedSpec",
    "eta_of",
    "p_of_eta",
    "mu_of",
    "fisher_F",
    "mixed_solve",
    # lm
    "DegenerateReplacementError",
    "LMInputs",
    "LMResult",
    "compute_Q",
    "lm_jacobian",
    "spectral_radius",
    "lm_reconstruct",
    # replacement
    "ReplacementError",
    "CIStatement",
    "HItem",
    "ReplacementPlan",
    "ContextConstraint",
    "ContextSpec",
    "KFamilies",
    "ValidityReport",
    "ci_to_interactions",
    "k_families",
    "check_valid_replacement",
    "construct_replacement",
    "construct_full_replacement",
    "context_restriction",
    "plan_selections",
    # diagnostics
    "DiagnosticsError",
    "RankStats",
    "SmoothnessVerdict",
    "classify_plan",
    "classify_smoothness",
    "verify_projector_factorization",
    "verify_conversion_structure",
    # model
    "ModelError",
    "ParseError",
    "NonIdentifiableModelError",
    "ModelSpec",
    "MarginBlock",
    "MarginResult",
    "PipelineResult",
    "CheckReport",
    "parse_model",
    "model_from_dict",
    "run_pipeline",
    "check_model",
    "matrix_table",
]
