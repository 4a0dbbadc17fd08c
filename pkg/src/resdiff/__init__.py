"""Residual-diffusion image restoration toolkit.

Builds restoration samplers around a forward process that blends a
degradation residual, an input-removal term and Gaussian noise, then
integrates the matching probability flow backwards with high-order
exponential-style steps. Includes posterior guidance with analytic
Jensen-gap bounds, and a wire protocol for out-of-process predictors.
"""

from .fields import as_field, field_stats, make_rng, same_shape
from .forward import diffuse, residual_of, sample_terminal
from .guidance import (
    DegenerateGuidanceWarning,
    JensenParams,
    fd_guidance_gradient,
    guidance_residual,
    jensen_gap_bound,
    jensen_sweep,
    lipschitz_gaussian,
    ups_correct,
)
from .imageio import load_image, save_image
from .metrics import PSNR_CAP_DB, psnr, ssim
from .predictors import (
    Predictor,
    PredictorOutput,
    derive_eps,
    estimate_clean,
    gaussian_posterior_mean,
    make_constant_predictor,
    make_echo_predictor,
    make_fixed_predictor,
    make_function_predictor,
    make_gaussian_oracle,
    make_known_clean_predictor,
    make_polynomial_predictor,
)
from .protocol import (
    ConformanceReport,
    ExternalPredictor,
    ProtocolError,
    conformance_check,
    spawn_external_predictor,
)
from .schedule import FAMILIES, Schedule, ScheduleConfig, build_schedule
from .solver import (
    SolverConfig,
    StudyProblem,
    StudyResult,
    Trajectory,
    convergence_study,
    make_study_problem,
    queue_solve,
    reference_solve,
    solve,
    step_first,
    step_second,
    step_third,
    trajectory_to_csv,
)

__version__ = "0.1.0"

__all__ = [
    "as_field", "field_stats", "make_rng", "same_shape",
    "diffuse", "residual_of", "sample_terminal",
    "DegenerateGuidanceWarning", "JensenParams", "fd_guidance_gradient",
    "guidance_residual", "jensen_gap_bound", "jensen_sweep",
    "lipschitz_gaussian", "ups_correct",
    "load_image", "save_image",
    "PSNR_CAP_DB", "psnr", "ssim",
    "Predictor", "PredictorOutput", "derive_eps", "estimate_clean",
    "gaussian_posterior_mean", "make_constant_predictor", "make_echo_predictor",
    "make_fixed_predictor", "make_function_predictor", "make_gaussian_oracle",
    "make_known_clean_predictor", "make_polynomial_predictor",
    "ConformanceReport", "ExternalPredictor", "ProtocolError",
    "conformance_check", "spawn_external_predictor",
    "FAMILIES", "Schedule", "ScheduleConfig", "build_schedule",
    "SolverConfig", "StudyProblem", "StudyResult", "Trajectory",
    "convergence_study", "make_study_problem", "queue_solve",
    "reference_solve", "solve", "step_first", "step_second", "step_third",
    "trajectory_to_csv",
    "__version__",
]
