"""Physically bounded neural parameterization of snowpack tendencies.

The pieces: ReLU constraint layers that keep predictions inside data-derived
bounds (constraints), a small feed-forward core (net), weighted-loss training
with leave-one-site-out selection (training), an explicit Euler simulator
with an optional coupled water-equivalent mode (simulation), evaluation and
interpretation statistics (metrics), an hourly-to-daily cleaning pipeline
(pipeline, qc), a layer-versus-branch throughput benchmark (bench), and a
synthetic data generator for tests and examples (synthetic).

Set SNOWPAR_BACKEND=numpy to disable the compiled kernels.
"""

from .backend import active_backend
from .constraints import (ConstrainedModel, ThresholdSpec, coupled_floor,
                          coupled_z_lower_bound, one_sided, reduced_clamp,
                          rescale_dt, snow_depth_constraint, snow_floor,
                          two_sided)
from .errors import BoundsError, ConfigError, DataError
from .metrics import (MetricReport, ale_first_order, compute_metrics,
                      mass_conservation_audit, wilcoxon_signed_rank)
from .model_io import load_model, save_model
from .net import (GradientSet, PredictiveNet, backward, backward_batch,
                  forward, forward_batch, init_predictive)
from .pipeline import (EngineeredData, clean_site, engineer_features,
                       parse_station_csv)
from .simulation import (SimulationResult, SiteSeries, density_report,
                         derive_density, euler_step, simulate_coupled,
                         simulate_depth)
from .training import (Hyperparams, TrainingSet, TrainResult,
                       build_training_set, compute_scales, loo_cv, loss,
                       loss_grad, rmsprop_init, rmsprop_step, sample_weights,
                       train)

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "ConstrainedModel", "ThresholdSpec", "one_sided", "two_sided",
    "reduced_clamp", "snow_floor", "coupled_floor", "snow_depth_constraint",
    "coupled_z_lower_bound", "rescale_dt",
    "BoundsError", "ConfigError", "DataError",
    "MetricReport", "compute_metrics", "wilcoxon_signed_rank",
    "ale_first_order", "mass_conservation_audit",
    "load_model", "save_model",
    "PredictiveNet", "GradientSet", "init_predictive", "forward",
    "forward_batch", "backward", "backward_batch",
    "EngineeredData", "parse_station_csv", "clean_site", "engineer_features",
    "SiteSeries", "SimulationResult", "euler_step", "simulate_depth",
    "simulate_coupled", "derive_density", "density_report",
    "Hyperparams", "TrainingSet", "TrainResult", "build_training_set",
    "loss", "loss_grad", "sample_weights", "compute_scales",
    "rmsprop_init", "rmsprop_step", "train", "loo_cv",
    "__version__",
]
