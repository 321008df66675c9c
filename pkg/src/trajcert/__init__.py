"""trajcert: randomized-smoothing certification for trajectory predictors."""

__version__ = "0.1.0"

from .core import (
    CertifiedPrediction,
    ClampBounds,
    ConfigError,
    MetricsReport,
    PredictionModes,
    Scene,
    SmoothingConfig,
    Trajectory,
    TrajcertError,
    flatten,
    unflatten,
)
from .data import (
    DatasetSplit,
    ParseError,
    calibrate_clamp_bounds,
    generate_synthetic,
    load_trajnet,
    save_trajnet,
)
from .denoise import DenoiserSpec, denoise, residual_noise
from .predictors import (
    LinearPredictorWeights,
    PredictorError,
    PredictorSpec,
    constant_velocity_weights,
    predict,
    spawn_external,
)
from .smoothing import (
    AnalyticLinearEvaluator,
    MonteCarloEvaluator,
    NoiseStream,
    SampleBatch,
    UnsupportedError,
    analytic_certify_linear,
    certify,
    mean_smooth,
    median_smooth,
    sample_outputs,
    std_normal_cdf,
    std_normal_icdf,
)
from .attack import AttackConfig, AttackReport, falsify, project_l2
from .metrics import (
    abd_fbd,
    ade_fde,
    certified_ade_fde,
    collision_rates,
    evaluate_dataset,
)

__all__ = [
    "AnalyticLinearEvaluator",
    "AttackConfig",
    "AttackReport",
    "CertifiedPrediction",
    "ClampBounds",
    "ConfigError",
    "DatasetSplit",
    "DenoiserSpec",
    "LinearPredictorWeights",
    "MetricsReport",
    "MonteCarloEvaluator",
    "NoiseStream",
    "ParseError",
    "PredictionModes",
    "PredictorError",
    "PredictorSpec",
    "SampleBatch",
    "Scene",
    "SmoothingConfig",
    "Trajectory",
    "TrajcertError",
    "UnsupportedError",
    "abd_fbd",
    "ade_fde",
    "analytic_certify_linear",
    "calibrate_clamp_bounds",
    "certified_ade_fde",
    "certify",
    "collision_rates",
    "constant_velocity_weights",
    "denoise",
    "evaluate_dataset",
    "falsify",
    "flatten",
    "generate_synthetic",
    "load_trajnet",
    "mean_smooth",
    "median_smooth",
    "predict",
    "project_l2",
    "residual_noise",
    "sample_outputs",
    "save_trajnet",
    "spawn_external",
    "std_normal_cdf",
    "std_normal_icdf",
    "unflatten",
]
