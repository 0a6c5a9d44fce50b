"""Brightness-adaptive infrared/visible image fusion.

A self-contained numpy implementation: rank-4 autodiff engine, shared-weight
conv backbone with a brightness gate on the visible stream, alternating
two-stage trainer, fusion-quality metrics, binary PNM image I/O, and a CLI.
"""

from .config import TrainConfig, format_config, load_config, parse_config
from .data import build_synthetic_dataset, load_pair_directory, write_pair
from .exceptions import (
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    FusionError,
    ParameterError,
)
from .gate import GateDecision
from .imageio import (
    Histogram,
    ImagePair,
    brightness_jitter,
    histogram,
    luminance,
    read_image,
    write_image,
)
from .losses import (
    LossReport,
    brightness_consistency_loss,
    fusion_loss,
    gradient_loss,
    pixel_loss,
    sobel_magnitude,
)
from .metrics import (
    MetricRow,
    evaluate_directory,
    evaluate_pair,
    metric_ag,
    metric_mi,
    metric_qabf,
    metric_sd,
    metric_sf,
)
from .model import FusionModel
from .optim import Adam
from .sweep import SweepReport, robustness_sweep
from .tensor import Tensor, backward, no_grad
from .trainer import train_loop
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FormatError",
    "FusionError",
    "FusionModel",
    "GateDecision",
    "Histogram",
    "ImagePair",
    "LossReport",
    "MetricRow",
    "ParameterError",
    "SweepReport",
    "Tensor",
    "TrainConfig",
    "backward",
    "brightness_consistency_loss",
    "brightness_jitter",
    "build_synthetic_dataset",
    "evaluate_directory",
    "evaluate_pair",
    "format_config",
    "fusion_loss",
    "gradient_loss",
    "histogram",
    "load_checkpoint",
    "load_config",
    "load_pair_directory",
    "luminance",
    "metric_ag",
    "metric_mi",
    "metric_qabf",
    "metric_sd",
    "metric_sf",
    "no_grad",
    "parse_config",
    "pixel_loss",
    "read_image",
    "robustness_sweep",
    "save_checkpoint",
    "sobel_magnitude",
    "train_loop",
    "write_image",
    "write_pair",
]
