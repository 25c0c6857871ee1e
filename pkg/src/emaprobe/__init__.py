"""Linear probing of speech representations against articulator trajectories."""

__version__ = "0.1.0"

from .errors import (
    DataIOError,
    EngineError,
    FitError,
    FormatError,
    MappingError,
    PairingError,
    UndefinedCorrelationError,
    ValidationError,
)
from .scoring import ArticulatoryScore, LayerProfile, articulatory_score, spearman_rank
from .tensor_io import TimeSeries, load_tensor, read_tensor, save_tensor, write_tensor

__all__ = [
    "__version__",
    "ArticulatoryScore",
    "DataIOError",
    "EngineError",
    "FitError",
    "FormatError",
    "LayerProfile",
    "MappingError",
    "PairingError",
    "TimeSeries",
    "UndefinedCorrelationError",
    "ValidationError",
    "articulatory_score",
    "load_tensor",
    "read_tensor",
    "save_tensor",
    "spearman_rank",
    "write_tensor",
]
