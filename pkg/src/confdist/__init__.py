"""Confidence distributions: construction, combination and simulation-based inversion."""
from .errors import (
    ConfDistError,
    DegenerateSampleError,
    EpsilonTooSmallError,
    InsufficientDataError,
    NonMonotoneInputError,
    ParameterDomainError,
    ReplicationFailureError,
    TailRuleError,
    UnsupportedOperationError,
)
from .statkit import ScalarLaw
from .core import (
    AnalyticCD,
    ConfDist,
    DiscreteCDPair,
    EmpiricalCD,
    GriddedCD,
    Interval,
    CDRandomVariable,
    cd_density,
    cd_eval,
    cd_interval,
    cd_pvalue,
    cd_quantile,
    confidence_curve,
    discrete_interval,
    dominance_check,
)
from .combine import CombinerSpec, StudyInput, combine, gc_map, gc_reference
from .invert import (
    GenerativeModel,
    InversionDraws,
    MatchingReport,
    abc_draws,
    bootstrap_draws,
    draws_to_cd,
    gfi_draws,
    matching_diagnostic,
)
from .harness import CoverageReport, StudyConfig

__version__ = "0.1.0"
