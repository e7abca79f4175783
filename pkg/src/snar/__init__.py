"""Stochastic nonlinear autoregression with hidden bubble states.

Simulation, quasi-maximum likelihood estimation with sandwich inference,
a self-weighted portmanteau diagnostic, residual- and null-based bubble
tagging, and a deterministic Monte Carlo replication harness.
"""

from .errors import (
    BoundaryWarning,
    DegenerateError,
    DomainError,
    InsufficientEventsError,
    MissingColumnError,
    OptimizationError,
    ParseError,
    SingularMatrixError,
    SnarError,
    StudyError,
)
from .innovations import InnovationFamily
from .model import (
    AuxBubblePath,
    SimulatedPath,
    SnarParams,
    kurtosis,
    second_moment,
    simulate,
    simulate_aux,
    validate_params,
)
from .qmle import (
    FitConfig,
    FitResult,
    ParamSpace,
    ci_p_delta,
    fit,
    hessian,
    neg_quasi_loglik,
    sandwich_cov,
    score,
)

__version__ = "0.1.0"

__all__ = [
    "AuxBubblePath",
    "BoundaryWarning",
    "DegenerateError",
    "DomainError",
    "FitConfig",
    "FitResult",
    "InnovationFamily",
    "InsufficientEventsError",
    "MissingColumnError",
    "OptimizationError",
    "ParamSpace",
    "ParseError",
    "SimulatedPath",
    "SingularMatrixError",
    "SnarError",
    "SnarParams",
    "StudyError",
    "ci_p_delta",
    "fit",
    "hessian",
    "kurtosis",
    "neg_quasi_loglik",
    "sandwich_cov",
    "score",
    "second_moment",
    "simulate",
    "simulate_aux",
    "validate_params",
]
