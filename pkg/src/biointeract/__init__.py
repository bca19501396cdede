"""Assess interaction between two binary exposures as departure from additivity.

Identity-, log- and logit-link binomial regressions on the saturated two-factor
design, with the interaction contrast (IC), the relative excess risk due to
interaction (RERI), robust and delta-method inference, and a seeded bootstrap.
"""

from .effects import (
    ContrastSpec,
    EffectReport,
    additivity_verdict,
    compute_ic,
    compute_reri,
    effect_report,
    multiplicativity_test,
    reri_from_table,
)
from .glm import ConvergenceFailure, FitResult, ModelSpec, deviance, fit, predict_cells
from .resample import BootstrapConfig, BootstrapResult, bootstrap, quantile
from .tabular import (
    CellCount,
    ExposureTable,
    GeneratorInput,
    IndividualRecord,
    expand_to_records,
    generate_hammond_dataset,
    read_table,
)
from .variance import WaldResult, model_covariance, robust_covariance, wald

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "CellCount",
    "ContrastSpec",
    "ConvergenceFailure",
    "EffectReport",
    "ExposureTable",
    "FitResult",
    "GeneratorInput",
    "IndividualRecord",
    "ModelSpec",
    "WaldResult",
    "additivity_verdict",
    "bootstrap",
    "compute_ic",
    "compute_reri",
    "deviance",
    "effect_report",
    "expand_to_records",
    "fit",
    "generate_hammond_dataset",
    "model_covariance",
    "multiplicativity_test",
    "predict_cells",
    "quantile",
    "read_table",
    "reri_from_table",
    "robust_covariance",
    "wald",
]
