"""HorNets: a routed network for tabular data with a linear path for continuous
inputs and a sampled feature-combination path for binary inputs."""
from .activations import ActivationKind, discretize, poly_clip, poly_clip_grad, relu, relu_grad
from .benchmark import (
    EvalReport,
    GridSpec,
    FULL_GRID,
    fit_logistic_baseline,
    grid_search,
    load_csv,
    macro_f1,
    predict_logistic,
    run_cv,
    save_csv,
    stirling_combination_estimate,
    stratified_folds,
    stratified_holdout,
)
from .datagen import GATES, Dataset, GateSpec, generate_gate_dataset, generate_suite
from .kernels import BACKEND
from .layers import ConfigError, Route, cat_router, comb_act_op
from .numeric import RngStream, ShapeError
from .rules import RuleReport, UnsupportedRouteError, extract_rules, score_interactions
from .training import HorNetsConfig, HorNetsModel, TrainReport, fit, load_model, predict, save_model

__version__ = "0.1.0"
