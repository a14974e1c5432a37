"""Transferability estimation for pre-trained feature extractors.

Scores how well a frozen model's features suit a labelled target task, and
benchmarks those scores against measured fine-tuning performance.
"""

__version__ = "0.1.0"

from .dataset import Dataset, TruePerformanceTable, load_features, load_labels  # noqa: E402
from .errors import ConfigError, DataError, DegenerateInputError, TransferabilityError  # noqa: E402
from .estimators import METHOD_IDS, MethodConfig, ScoreRecord, estimate  # noqa: E402
from .evaluation import aggregate, reciprocal_rank, spearman  # noqa: E402

__all__ = [
    "Dataset", "TruePerformanceTable", "load_features", "load_labels",
    "TransferabilityError", "DataError", "DegenerateInputError", "ConfigError",
    "METHOD_IDS", "MethodConfig", "ScoreRecord", "estimate",
    "aggregate", "reciprocal_rank", "spearman",
]
