"""Wavelet-driven multimodal intent recognition on a small numpy autodiff engine."""

from .config import RunConfig
from .data import FeatureRecord, SynthSpec, load_dataset, synthesize_dataset
from .errors import ConfigError, DataError, NumericError, ShapeError, TapeError, WdmirError
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .model import ModelConfig, forward, init_params
from .training import ablate, evaluate, predict, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "FeatureRecord", "MetricsReport", "ModelConfig",
    "NumericError", "RunConfig", "ShapeError", "SynthSpec", "TapeError", "WdmirError",
    "ablate", "compute_metrics", "confusion_matrix", "evaluate", "forward",
    "init_params", "load_dataset", "predict", "synthesize_dataset", "train",
]
