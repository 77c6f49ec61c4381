"""MaxDiff / Best-Only feature prioritization: design, field, simulate, analyze."""

__version__ = "0.1.0"

from .domain import (
    BEST_ONLY,
    BEST_WORST,
    TOP_CHOICE,
    ChoiceObservation,
    CohortSpec,
    ConflictError,
    Dataset,
    Design,
    DesignSpec,
    InsufficientDataError,
    InvalidInputError,
    InvalidSpecError,
    Item,
    ItemShare,
    MaxDiffError,
    NotFoundError,
    Screen,
    ShareReport,
    UndefinedItemError,
    chance_cutoff,
    decision_counts,
    validate_dataset,
)
from .design import DesignDiagnostics, design_diagnostics, generate_design
from .estimator import (
    CohortAnalysis,
    FitOptions,
    FitResult,
    UtilityVector,
    bootstrap_shares,
    count_shares,
    fit,
    fit_by_cohort,
    log_likelihood,
    log_likelihood_gradient,
    shares_from_utilities,
)
from .simulator import (
    MethodComparison,
    PopulationSpec,
    PowerTable,
    compare_methods,
    draw_population,
    power_analysis,
    simulate_dataset,
)

__all__ = [
    "__version__",
    "BEST_ONLY",
    "BEST_WORST",
    "TOP_CHOICE",
    "ChoiceObservation",
    "CohortAnalysis",
    "CohortSpec",
    "ConflictError",
    "Dataset",
    "Design",
    "DesignDiagnostics",
    "DesignSpec",
    "FitOptions",
    "FitResult",
    "InsufficientDataError",
    "InvalidInputError",
    "InvalidSpecError",
    "Item",
    "ItemShare",
    "MaxDiffError",
    "MethodComparison",
    "NotFoundError",
    "PopulationSpec",
    "PowerTable",
    "Screen",
    "ShareReport",
    "UndefinedItemError",
    "UtilityVector",
    "bootstrap_shares",
    "chance_cutoff",
    "compare_methods",
    "count_shares",
    "decision_counts",
    "design_diagnostics",
    "draw_population",
    "fit",
    "fit_by_cohort",
    "generate_design",
    "log_likelihood",
    "log_likelihood_gradient",
    "power_analysis",
    "shares_from_utilities",
    "simulate_dataset",
    "validate_dataset",
]
