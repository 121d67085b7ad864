"""SAR-guided optical image dehazing on a from-scratch numpy stack.

The package provides a small reverse-mode autodiff engine (tensor, ops),
selective state-space scan kernels (ssm), the dual-branch fusion network
(network), dual-domain training (training), image quality metrics
(metrics), a synthetic paired-data pipeline (data, ppm), checkpointing,
a scaling benchmark (bench), and a command line interface (cli).
"""

__version__ = "0.1.0"

from . import ops  # noqa: F401  (installs Tensor operator bindings)
from .errors import (AlignmentError, ConfigError, DataError, DehazeError,
                     DomainError, NumericError, ShapeError, TapeError)
from .tensor import Tape, Tensor, backward, check_mode, parameter
from .ssm import SsmParams, css2d, discretize, selective_scan, ss2d
from .network import DehazeMamba, ModelConfig
from .training import AdamW, TrainConfig, cosine_lr, total_loss, train
from .checkpoint import load_checkpoint, save_checkpoint
from .metrics import psnr, ssim
from .data import ImagePair, generate_dataset, haze_stats, load_dataset

__all__ = [
    "__version__",
    "AlignmentError", "ConfigError", "DataError", "DehazeError",
    "DomainError", "NumericError", "ShapeError", "TapeError",
    "Tape", "Tensor", "backward", "check_mode", "parameter",
    "SsmParams", "css2d", "discretize", "selective_scan", "ss2d",
    "DehazeMamba", "ModelConfig",
    "AdamW", "TrainConfig", "cosine_lr", "total_loss", "train",
    "load_checkpoint", "save_checkpoint",
    "psnr", "ssim",
    "ImagePair", "generate_dataset", "haze_stats", "load_dataset",
]
