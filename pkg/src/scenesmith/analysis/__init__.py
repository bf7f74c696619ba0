"""Statistics kit: estimators, synthetic study generator and analysis driver."""

from .stats import (
    AncovaResult,
    DegenerateMargins,
    RankDeficientDesign,
    TestResult,
    ZeroPooledVariance,
    ZeroTotalVariance,
    ZeroVarianceDifferences,
    ancova,
    bootstrap_ci,
    cohen_kappa,
    cronbach_alpha,
    independent_t,
    paired_t,
)
from .study import (
    CONDITIONS,
    CSV_HEADER,
    PRIOR_LEVELS,
    SEQUENCES,
    TOPICS,
    SchemaViolation,
    StudyDataset,
    StudyRow,
    analyze_study,
    emit_plot_data,
    load_csv,
    save_csv,
)
from .synthetic import (
    DEFAULT_TARGETS,
    InfeasibleTargets,
    PairedTarget,
    StudyTargets,
    generate_synthetic_study,
)

__all__ = [
    "AncovaResult", "DegenerateMargins", "RankDeficientDesign", "TestResult",
    "ZeroPooledVariance", "ZeroTotalVariance", "ZeroVarianceDifferences",
    "ancova", "bootstrap_ci", "cohen_kappa", "cronbach_alpha", "independent_t",
    "paired_t", "CONDITIONS", "CSV_HEADER", "PRIOR_LEVELS", "SEQUENCES",
    "TOPICS", "SchemaViolation", "StudyDataset", "StudyRow", "analyze_study",
    "emit_plot_data", "load_csv", "save_csv", "DEFAULT_TARGETS",
    "InfeasibleTargets", "PairedTarget", "StudyTargets",
    "generate_synthetic_study",
]
