"""Tamed Euler schemes for SDEs with super-linearly growing coefficients,
plus co-simulation of the normalized-error limit processes and the statistics
to compare them: strong-order regression, error-evolution curves, and
two-sample distribution tests.
"""

from .analysis import (
    DistributionResult,
    DivergenceError,
    ErrorEnsemble,
    EvolutionResult,
    KsResult,
    RegressionResult,
    StrongOrderResult,
    build_error_ensemble,
    error_distribution_study,
    error_evolution_study,
    linregress,
    mc_mean_ci,
    normalization_rate,
    strong_order_study,
    two_sample_ks,
)
from .limit import (
    LimitConfig,
    LimitSample,
    limit_mean_square_curve,
    sample_terminal_errors,
    simulate_limit_additive,
    simulate_limit_multiplicative,
)
from .models import (
    AdditiveSdeModel,
    MonotonicityConstants,
    SdeModel,
    ValidationReport,
    build_additive_model,
    build_multiplicative_model,
    builtin_cubic_additive,
    builtin_linear_additive,
    builtin_linear_oracle,
    builtin_model,
    builtin_quintic_multiplicative,
    check_derivatives,
    validate_monotonicity,
)
from .noise import (
    AuxiliaryNoise,
    BrownianPath,
    TimeGrid,
    coarsen,
    driving_path,
    generate_auxiliary,
    generate_path,
    load_path,
    save_path,
    stream_seed,
)
from .scheme import (
    SolverOutput,
    TamingConfig,
    Variant,
    default_taming_exponent,
    effective_exponent,
    integrate,
    integrate_ensemble,
    reference_solution,
    tame_diffusion,
    tame_drift,
    variant_for_model,
)
from .version import __version__

__all__ = [name for name in dir() if not name.startswith("_")]
