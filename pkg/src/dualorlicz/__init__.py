"""Numerical normalised Gauss curvature flow for dual Orlicz-Minkowski type problems."""

__version__ = "0.1.0"

from .errors import (
    ConvexityLoss,
    DomainError,
    DualOrliczError,
    EmptyTrace,
    NeitherCase,
    NotConvex,
    QuadratureFailure,
    SchemaError,
    StepFailure,
    TailUnavailable,
)
from .flow import (
    Ball,
    CosinePerturbation,
    Ellipse,
    Ellipsoid,
    FlowConfig,
    FlowState,
    FlowTrace,
    TraceRecord,
    Verdict,
    make_initial,
    run,
    step,
    velocity,
)
from .functionals import (
    FunctionalReport,
    J_rate_identity,
    dual_volume,
    enclosed_volume,
    eta,
    functional_report,
    orlicz_J,
)
from .geometry import SphericalGrid, SupportField, read_profile, symmetrize, write_profile
from .model import (
    Case,
    CallableDensity,
    CustomWeight,
    PowerWeight,
    ProblemSpec,
    RadialPowerDensity,
    RadialProfileDensity,
    classify_case,
)
from .verify import AuditReport, AuditTolerances, ResidualReport, audit, cross_dimension_consistency, residual
