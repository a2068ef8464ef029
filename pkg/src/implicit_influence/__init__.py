"""Per-node, per-contagion influence estimation in implicit diffusion networks.

The main estimator is :class:`CopulaInfluenceRegressor`; the reference
models :class:`LIMRegressor` and :class:`MSLIMRegressor` share its
``fit``/``predict`` interface.
"""

from .baselines import LIMRegressor, MSLIMRegressor, fit_lim, fit_mslim
from .copula import CopulaInfluenceRegressor, FitResult, Hyperparams, StepSizeError
from .data import (
    InfectionLog,
    InfluenceMatrix,
    VolumeSeries,
    build_design,
    build_volume,
    design_predictions,
    load_events,
    predict_volume,
)
from .evaluation import (
    CvPlan,
    cross_validate,
    influence_error,
    rank_nodes,
    select_influential,
    volume_mse,
)
from .glasso import glasso_fit
from .synth import SynthConfig, gen_instance
from .topics import TopicExtractor

__version__ = "0.1.0"

__all__ = [
    "CopulaInfluenceRegressor",
    "CvPlan",
    "FitResult",
    "Hyperparams",
    "InfectionLog",
    "InfluenceMatrix",
    "LIMRegressor",
    "MSLIMRegressor",
    "StepSizeError",
    "SynthConfig",
    "TopicExtractor",
    "VolumeSeries",
    "build_design",
    "build_volume",
    "cross_validate",
    "design_predictions",
    "fit_lim",
    "fit_mslim",
    "gen_instance",
    "glasso_fit",
    "influence_error",
    "load_events",
    "predict_volume",
    "rank_nodes",
    "select_influential",
    "volume_mse",
]
