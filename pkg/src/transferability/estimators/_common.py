from __future__ import annotations

import numpy as np

from ..dataset import check_features, check_labels
from ..errors import TransferabilityError


def features_and_labels(X, y, min_classes: int = 2) -> tuple[np.ndarray, np.ndarray, int]:
    """Validate a labelled dataset and return ``(X, y, C)``."""
    X = check_features(X)
    y = check_labels(y)
    if y.shape[0] != X.shape[0]:
        raise TransferabilityError(f"{y.shape[0]} labels for {X.shape[0]} samples")
    C = int(y.max()) + 1
    if C < min_classes:
        raise TransferabilityError(f"need at least {min_classes} classes, got {C}")
    return X, y, C


def one_hot(y: np.ndarray, C: int) -> np.ndarray:
    out = np.zeros((y.shape[0], C))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def class_means(X: np.ndarray, y: np.ndarray, C: int) -> np.ndarray:
    counts = np.bincount(y, minlength=C)
    return (one_hot(y, C).T @ X) / counts[:, None]
