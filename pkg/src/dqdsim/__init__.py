"""Lindblad dynamics of a laser-driven three-level double quantum dot."""

from .analytic import (
    EigenPair,
    Populations,
    PrintedSteadyReport,
    UndrivenSolution,
    driven_steady_oracle,
    driven_steady_printed,
    eigenvalues,
    eval_populations,
    undriven_solution,
    undriven_steady,
)
from .core import (
    DensityMatrix,
    DensityReport,
    Generator,
    LindbladTerm,
    dissipator,
    generator_apply,
    stack,
    unstack,
    validate_density,
    vectorized_liouvillian,
)
from .model import (
    PRESETS,
    REFERENCE_RATES,
    PhysicalParams,
    RateParams,
    build_driven,
    build_undriven,
    decay_rate,
    planck_occupation,
    rates_from_physical,
)
from .propagator import (
    IntegratorConfig,
    Trajectory,
    count_oscillations,
    integrate,
    integrate_rk4,
    long_time_agreement,
    relaxation_time,
    steady_state,
)

__version__ = "0.1.0"
