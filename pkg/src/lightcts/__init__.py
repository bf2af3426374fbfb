"""Lightweight correlated time series forecasting on a numpy autodiff core."""
from .config import RunConfig, load_config, parse_config
from .data import (
    CtsDataset,
    Normalizer,
    SplitSpec,
    WindowSample,
    build_mask,
    fit_normalizer,
    load_dataset,
    make_windows,
    save_dataset,
    split,
)
from .errors import (
    ConfigError,
    ContractError,
    DegenerateMaskError,
    FormatError,
    InsufficientLengthError,
    LightCtsError,
    ShapeError,
    TrainingError,
    UndefinedMetricError,
)
from .model import LightCtsModel, ModelConfig, forward, load_checkpoint, predict, save_checkpoint
from .profiler import CostReport, count_flops, count_params, profile, scaling_check
from .synth import SynthSpec, generate
from .tensor import Tensor, backward, no_grad
from .training import MetricReport, TrainConfig, evaluate, persistence_forecast, train

__version__ = "0.1.0"
