"""Per-person N-of-1 Bayesian analysis of repeated-measures gait trials."""

__version__ = "0.1.0"

from .data import (
    Foot,
    Outcome,
    StrideRecord,
    TrialSeries,
    WalkingCondition,
    describe,
    parse_stride_csv,
    preprocess,
)
from .design import (
    ModelSpec,
    ModelVariant,
    PriorSet,
    build_design_matrix,
    default_priors,
)
from .diagnostics import (
    PosteriorSummary,
    condition_diff_matrix,
    ess,
    posterior_predictive,
    psrf,
    summarize,
)
from .population import AnovaResult, cell_means, rm_anova_2x2
from .sampler import PosteriorChains, SamplerConfig, log_likelihood, run_sampler
from .synth import SynthSpec, generate_series, generate_study

__all__ = [
    "Foot",
    "Outcome",
    "StrideRecord",
    "TrialSeries",
    "WalkingCondition",
    "describe",
    "parse_stride_csv",
    "preprocess",
    "ModelSpec",
    "ModelVariant",
    "PriorSet",
    "build_design_matrix",
    "default_priors",
    "PosteriorSummary",
    "condition_diff_matrix",
    "ess",
    "posterior_predictive",
    "psrf",
    "summarize",
    "AnovaResult",
    "cell_means",
    "rm_anova_2x2",
    "PosteriorChains",
    "SamplerConfig",
    "log_likelihood",
    "run_sampler",
    "SynthSpec",
    "generate_series",
    "generate_study",
]
