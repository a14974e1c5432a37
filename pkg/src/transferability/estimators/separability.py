"""Class-separability estimators: MSC, kNN, PARC, GBC and Logistic."""

from __future__ import annotations

import warnings

import numpy as np

from ..affinity import (
    AffinityKind,
    condensed_distances,
    condensed_label_distances,
    iter_distance_rows,
)
from ..errors import TransferabilityError
from ..evaluation import spearman
from ..numerics import fit_logistic
from ._common import features_and_labels, one_hot

GBC_VAR_FLOOR = 1e-12


def msc_score(X, y, kind=AffinityKind.COSINE) -> float:
    """Mean silhouette coefficient with the target classes as clusters.

    Samples in singleton classes contribute 0.
    """
    X, y, C = features_and_labels(X, y)
    counts = np.bincount(y, minlength=C).astype(np.float64)
    Y = one_hot(y, C)
    total = 0.0
    for start, rows in iter_distance_rows(X, kind):
        yb = y[start : start + rows.shape[0]]
        sums = rows @ Y
        own = counts[yb]
        idx = np.arange(rows.shape[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            a = sums[idx, yb] / (own - 1)
            mean_other = sums / counts
        mean_other[idx, yb] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (b - a) / denom
        s[(own <= 1) | (denom == 0)] = 0.0
        total += s.sum()
    return float(total / X.shape[0])


def knn_score(X, y, k: int = 5, kind=AffinityKind.CORRELATION) -> float:
    """Leave-one-out accuracy of a k-nearest-neighbour majority vote.

    Neighbours are ordered by distance, then sample index. A tied vote goes
    to the tied class holding the closest neighbour, then to the lowest id.
    """
    X, y, C = features_and_labels(X, y)
    n = X.shape[0]
    if k < 1:
        raise TransferabilityError("k must be positive")
    if n <= k:
        raise TransferabilityError(f"kNN with k={k} needs more than {k} samples, got {n}")
    correct = 0
    for start, rows in iter_distance_rows(X, kind):
        b = rows.shape[0]
        rows[np.arange(b), np.arange(start, start + b)] = np.inf
        kth = np.partition(rows, k - 1, axis=1)[:, k - 1]
        neigh = np.empty((b, k), dtype=np.int64)
        for i in range(b):
            cand = np.flatnonzero(rows[i] <= kth[i])
            order = np.lexsort((cand, rows[i, cand]))
            neigh[i] = cand[order[:k]]
        ndist = np.take_along_axis(rows, neigh, axis=1)
        ncls = y[neigh]
        votes = np.zeros((b, C))
        np.add.at(votes, (np.repeat(np.arange(b), k), ncls.ravel()), 1.0)
        closest = np.full((b, C), np.inf)
        np.minimum.at(closest, (np.repeat(np.arange(b), k), ncls.ravel()), ndist.ravel())
        tied = votes == votes.max(axis=1, keepdims=True)
        closest[~tied] = np.inf
        pred = np.argmin(closest, axis=1)
        correct += int(np.sum(pred == y[start : start + b]))
    return correct / n


def parc_score(X, y, kind=AffinityKind.CORRELATION) -> float:
    """Spearman correlation between feature and one-hot label affinity graphs."""
    X, y, C = features_and_labels(X, y)
    if X.shape[0] < 3:
        raise TransferabilityError("PARC needs at least 3 samples")
    return spearman(condensed_distances(X, kind), condensed_label_distances(y, kind, C))


def bhattacharyya_distance_diag(mu1, var1, mu2, var2) -> float:
    """Closed-form Bhattacharyya distance between two diagonal Gaussians."""
    var = (var1 + var2) / 2.0
    term_mean = 0.125 * np.sum((mu1 - mu2) ** 2 / var)
    term_cov = 0.5 * np.sum(np.log(var) - 0.5 * (np.log(var1) + np.log(var2)))
    return float(term_mean + term_cov)


def gbc_score(X, y) -> float:
    """Negative sum of Bhattacharyya coefficients over unordered class pairs.

    Each class is a diagonal Gaussian with unbiased per-dimension variances
    (floored at ``GBC_VAR_FLOOR``).
    """
    X, y, C = features_and_labels(X, y)
    counts = np.bincount(y, minlength=C)
    if counts.min() < 2:
        raise TransferabilityError(f"GBC needs at least 2 samples per class (class {int(counts.argmin())})")
    # class moments in one pass over globally centred data
    Y = one_hot(y, C)
    shift = X.mean(axis=0)
    Z = X - shift
    n_c = counts[:, None].astype(np.float64)
    mus_z = (Y.T @ Z) / n_c
    sq = (Y.T @ (Z * Z) - n_c * mus_z**2) / (n_c - 1)
    mus = mus_z + shift
    vars_ = np.maximum(sq, GBC_VAR_FLOOR)
    total = 0.0
    for i in range(C):
        for j in range(i + 1, C):
            total += np.exp(-bhattacharyya_distance_diag(mus[i], vars_[i], mus[j], vars_[j]))
    return -float(total)


def stratified_folds(y: np.ndarray, n_folds: int, seed: int) -> np.ndarray:
    """Fold id per sample; each class is shuffled then dealt round-robin."""
    n = y.shape[0]
    if n_folds == n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    for c in range(int(y.max()) + 1):
        members = rng.permutation(np.flatnonzero(y == c))
        folds[members] = np.arange(members.size) % n_folds
    return folds


def logistic_score(X, y, cv_folds: int = 5, seed: int = 0, l2: float = 1.0) -> float:
    """Stratified cross-validated accuracy of an L2 softmax regression.

    ``cv_folds == N`` gives leave-one-out.
    """
    X, y, C = features_and_labels(X, y)
    n = X.shape[0]
    counts = np.bincount(y, minlength=C)
    if cv_folds < 2:
        raise TransferabilityError("cross-validation needs at least 2 folds")
    if cv_folds == n:
        if counts.min() < 2:
            raise TransferabilityError("leave-one-out needs at least 2 samples per class")
    elif counts.min() < cv_folds:
        raise TransferabilityError(
            f"class {int(counts.argmin())} has {int(counts.min())} samples, fewer than {cv_folds} folds"
        )
    folds = stratified_folds(y, cv_folds, seed)
    correct = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for f in range(cv_folds):
            test = folds == f
            model = fit_logistic(X[~test], y[~test], l2=l2, n_classes=C)
            correct += int(np.sum(model.predict(X[test]) == y[test]))
    return correct / n
