"""Replicator-mutator filtering toolkit.

Linear-Gaussian filtering through the replicator-mutator lens: density-level
solvers, generalized (r, s) Kalman-Bucy moment flows, mean-field ensembles,
misspecification asymptotics, and tempering dynamics, with a CLI for the
standard experiments.
"""

from .asymptotics import (
    AsymptoticsReport,
    BiasMse,
    CubicRoot,
    ErrorMoments,
    InflationBounds,
    MatchedPair,
    RoptResult,
    asymptotic_bias_mse,
    asymptotics_report,
    cubic_a_star,
    cubic_coeffs,
    e_inf_surface,
    error_moment_flow,
    inflation_bounds,
    lyapunov_solve,
    matched_pair,
    r_opt_given_s,
    report_to_json,
    s_opt_given_r,
    sl_su,
    surface_to_csv,
)
from .densitypde import (
    DensityGrid,
    ck_step,
    default_domain,
    density_moments,
    gaussian_grid,
    normalize,
    run_ck,
    run_zakai,
    snapshot_to_csv,
    zakai_ito_step,
    zakai_strat_step,
)
from .ensemble import (
    VARIANTS,
    EnsembleState,
    EnsembleTrajectory,
    UnbiasednessResult,
    enkbf_step,
    ensemble_moments,
    ensemble_to_csv,
    inflation_pair,
    make_ensemble,
    run_ensemble,
    unbiasedness_test,
)
from .experiments import (
    CalibrationRow,
    Figure1Result,
    HalvingStudy,
    MseCurve,
    SweepResult,
    adaptive_horizon,
    argmin_alignment,
    burn_in_time,
    calibration_to_csv,
    covariance_calibration,
    delta_halving_study,
    empirical_mse,
    figure1_comparison,
    halving_to_csv,
    mse_to_csv,
    rs_heatmap,
    sweep_to_csv,
)
from .model import (
    KALMAN,
    ConvergenceError,
    DegenerateDensityError,
    DimensionError,
    LinearGaussianModel,
    ParameterError,
    RegimeError,
    RsPair,
    StabilityError,
    TimeGrid,
    ValidationReport,
    admissible_s_range,
    load_model,
    model_from_dict,
    model_to_dict,
    preset,
    validate_model,
)
from .moments import (
    MomentTrajectory,
    StabilityInfo,
    SteadyStateCov,
    a_inf_scalar,
    cov_rhs,
    kalman_gain,
    run_moments,
    stability_matrix,
    steady_state_cov,
    steady_state_cov_scalar,
    step_covariance,
    step_mean_ito,
    step_mean_smooth,
    trajectory_to_csv,
)
from .pathgen import (
    BrownianInterpolant,
    PiecewiseObservation,
    ReferenceTrajectory,
    brownian_increments,
    ito_observation_increments,
    knot_increments,
    path_to_csv,
    piecewise_linear_path,
    reference_trajectory,
    rng_stream,
    synth_observation,
)
from .tempering import (
    TemperingResult,
    TraitDistribution,
    fisher_rao_energy,
    gaussian_weights,
    quadratic_fitness,
    replicator_step,
    tempering_run,
    tempering_to_csv,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "KALMAN",
    "ConvergenceError",
    "DegenerateDensityError",
    "DimensionError",
    "LinearGaussianModel",
    "ParameterError",
    "RegimeError",
    "RsPair",
    "StabilityError",
    "TimeGrid",
    "ValidationReport",
    "admissible_s_range",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "preset",
    "validate_model",
    # pathgen
    "BrownianInterpolant",
    "PiecewiseObservation",
    "ReferenceTrajectory",
    "brownian_increments",
    "ito_observation_increments",
    "knot_increments",
    "path_to_csv",
    "piecewise_linear_path",
    "reference_trajectory",
    "rng_stream",
    "synth_observation",
    # densitypde
    "DensityGrid",
    "ck_step",
    "default_domain",
    "density_moments",
    "gaussian_grid",
    "normalize",
    "run_ck",
    "run_zakai",
    "snapshot_to_csv",
    "zakai_ito_step",
    "zakai_strat_step",
    # moments
    "MomentTrajectory",
    "StabilityInfo",
    "SteadyStateCov",
    "a_inf_scalar",
    "cov_rhs",
    "kalman_gain",
    "run_moments",
    "stability_matrix",
    "steady_state_cov",
    "steady_state_cov_scalar",
    "step_covariance",
    "step_mean_ito",
    "step_mean_smooth",
    "trajectory_to_csv",
    # asymptotics
    "AsymptoticsReport",
    "BiasMse",
    "CubicRoot",
    "ErrorMoments",
    "InflationBounds",
    "MatchedPair",
    "RoptResult",
    "asymptotic_bias_mse",
    "asymptotics_report",
    "cubic_a_star",
    "cubic_coeffs",
    "e_inf_surface",
    "error_moment_flow",
    "inflation_bounds",
    "lyapunov_solve",
    "matched_pair",
    "r_opt_given_s",
    "report_to_json",
    "s_opt_given_r",
    "sl_su",
    "surface_to_csv",
    # ensemble
    "VARIANTS",
    "EnsembleState",
    "EnsembleTrajectory",
    "UnbiasednessResult",
    "enkbf_step",
    "ensemble_moments",
    "ensemble_to_csv",
    "inflation_pair",
    "make_ensemble",
    "run_ensemble",
    "unbiasedness_test",
    # tempering
    "TemperingResult",
    "TraitDistribution",
    "fisher_rao_energy",
    "gaussian_weights",
    "quadratic_fitness",
    "replicator_step",
    "tempering_run",
    "tempering_to_csv",
    # experiments
    "CalibrationRow",
    "Figure1Result",
    "HalvingStudy",
    "MseCurve",
    "SweepResult",
    "adaptive_horizon",
    "argmin_alignment",
    "burn_in_time",
    "calibration_to_csv",
    "covariance_calibration",
    "delta_halving_study",
    "empirical_mse",
    "figure1_comparison",
    "halving_to_csv",
    "mse_to_csv",
    "rs_heatmap",
    "sweep_to_csv",
]
