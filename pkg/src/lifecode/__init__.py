"""Codon-level DNA foundation model toolkit on a small numpy autodiff core."""

from .config import EncoderConfig, ModelConfig, TokenizerConfig, TrainConfig, preset
from .model import LifeCodeModel, init_model

__version__ = "0.1.0"

__all__ = ["EncoderConfig", "LifeCodeModel", "ModelConfig", "TokenizerConfig", "TrainConfig",
           "init_model", "preset"]
