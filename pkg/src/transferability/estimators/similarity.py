"""Model-similarity estimators comparing candidate features with target-model features."""

from __future__ import annotations

import numpy as np

from ..affinity import AffinityKind, condensed_distances
from ..dataset import check_features
from ..errors import TransferabilityError
from ..evaluation import spearman


def _paired(phi, psi) -> tuple[np.ndarray, np.ndarray]:
    phi = check_features(phi, "candidate features")
    psi = check_features(psi, "target features")
    if phi.shape[0] != psi.shape[0]:
        raise TransferabilityError(
            f"candidate and target features have {phi.shape[0]} and {psi.shape[0]} rows"
        )
    return phi, psi


def dse_score(phi, psi, kind=AffinityKind.EUCLIDEAN) -> float:
    """Negative mean per-sample distance between candidate and target features."""
    phi, psi = _paired(phi, psi)
    if phi.shape[1] != psi.shape[1]:
        raise TransferabilityError(
            f"DSE compares features sample-wise; dimensions differ ({phi.shape[1]} vs {psi.shape[1]})"
        )
    kind = AffinityKind.parse(kind)
    if kind is AffinityKind.EUCLIDEAN:
        d = np.sqrt(np.sum((phi - psi) ** 2, axis=1))
    else:
        a, b = phi, psi
        if kind is AffinityKind.CORRELATION:
            a = a - a.mean(axis=1, keepdims=True)
            b = b - b.mean(axis=1, keepdims=True)
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        if np.any(na == 0) or np.any(nb == 0):
            raise TransferabilityError(f"{kind.value} distance undefined for zero/constant rows")
        d = 1.0 - np.einsum("ij,ij->i", a, b) / (na * nb)
        d[d < 1e-12] = 0.0
    return -float(np.mean(d))


def zscore_columns(X: np.ndarray) -> np.ndarray:
    """Standardise each feature dimension; constant dimensions become zero."""
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - X.mean(axis=0)) / std


def rsa_score(phi, psi, kind=AffinityKind.CORRELATION) -> float:
    """Spearman correlation between the two feature spaces' affinity graphs."""
    phi, psi = _paired(phi, psi)
    if phi.shape[0] < 3:
        raise TransferabilityError("RSA needs at least 3 samples")
    g_phi = condensed_distances(zscore_columns(phi), kind)
    g_psi = condensed_distances(zscore_columns(psi), kind)
    return spearman(g_phi, g_psi)
