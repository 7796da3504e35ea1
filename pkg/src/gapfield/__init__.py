"""Simulator and verification harness for near-contact insulated inclusions."""

from .errors import (
    CertificateFailure,
    DomainError,
    GapFieldError,
    InputError,
    PreconditionError,
    ResourceError,
    SolverError,
    UnsupportedInputError,
)
from .geometry import (
    GapGeometry,
    GeometrySpec,
    OuterClosure,
    RadialProfile,
    Region,
    contact_scale,
    gap_width,
    validate,
)
from .transform import (
    GapChart,
    coefficient_bounds_check,
    coefficients,
    flatten,
    unflatten,
)
from .solver import (
    BoundaryData,
    CurvilinearGrid,
    DiscreteField,
    ResolutionPolicy,
    build_annulus_grid,
    build_grid,
    energy,
    gradient,
    max_gradient,
    max_transverse_derivative,
    oscillation,
    read_field,
    regauge,
    solve_dirichlet,
    solve_neumann,
    write_field,
)
from .reduced import (
    DegenerateProblem,
    ReducedField,
    average_field,
    harnack_decay,
    log_barrier_bounds,
    radial_oracle,
    reduced_consistency,
    sandwich_check,
    solve_degenerate,
    transverse_flux,
)
from .experiments import (
    FitResult,
    SweepRecord,
    boundedness_certificate,
    envelope_certificate,
    fit_log_law,
    fit_power_law,
    improvement_certificate,
    lower_bound_certificate,
    run_case,
    sweep,
)
from .config import ExperimentPlan, emit_config, parse_config

__version__ = "0.1.0"
