"""Hierarchical encoder-decoder summarization with trained and frozen encoders."""

from .errors import CheckpointError, ContractError, DegenerateInputError, DimensionError, HredError
from .model import ModelConfig, SummarizationModel

__all__ = [
    "CheckpointError",
    "ContractError",
    "DegenerateInputError",
    "DimensionError",
    "HredError",
    "ModelConfig",
    "SummarizationModel",
]
__version__ = "0.1.0"
