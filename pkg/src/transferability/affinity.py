"""Sample affinity (distance) functions and dense affinity graphs."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import DegenerateInputError, TransferabilityError

_BLOCK_ROWS = 1024


class AffinityKind(str, Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    CORRELATION = "correlation"

    @classmethod
    def parse(cls, value) -> "AffinityKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise TransferabilityError(f"unknown affinity {value!r} (expected one of {names})") from None


def distance(a, b, kind) -> float:
    """Distance between two vectors under ``kind``."""
    kind = AffinityKind.parse(kind)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise TransferabilityError(f"vectors must be 1-D of equal length, got {a.shape} and {b.shape}")
    if kind is AffinityKind.EUCLIDEAN:
        return float(np.sqrt(np.sum((a - b) ** 2)))
    if kind is AffinityKind.CORRELATION:
        a = a - a.mean()
        b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        what = "constant vector" if kind is AffinityKind.CORRELATION else "zero vector"
        raise DegenerateInputError(f"{kind.value} distance undefined for a {what}")
    d = 1.0 - float(a @ b) / (na * nb)
    return 0.0 if d < 1e-12 else d


def _prepare(X: np.ndarray, kind: AffinityKind) -> np.ndarray:
    """Rows normalised so that ``1 - Z Z^T`` is the cosine / correlation distance."""
    X = np.asarray(X, dtype=np.float64)
    if kind is AffinityKind.EUCLIDEAN:
        return X
    if kind is AffinityKind.CORRELATION:
        X = X - X.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        what = "constant" if kind is AffinityKind.CORRELATION else "all-zero"
        raise DegenerateInputError(
            f"{kind.value} distance undefined: row {int(bad[0]) + 1} is {what}"
        )
    return X / norms[:, None]


def _cross(Za: np.ndarray, Zb: np.ndarray, kind: AffinityKind) -> np.ndarray:
    if kind is AffinityKind.EUCLIDEAN:
        sa = np.einsum("ij,ij->i", Za, Za)
        sb = np.einsum("ij,ij->i", Zb, Zb)
        d2 = sa[:, None] + sb[None, :] - 2.0 * (Za @ Zb.T)
        # the expanded form loses precision for near-duplicates; redo those exactly
        close = np.argwhere(d2 <= 1e-6 * (sa[:, None] + sb[None, :]))
        if close.size:
            diff = Za[close[:, 0]] - Zb[close[:, 1]]
            d2[close[:, 0], close[:, 1]] = np.einsum("ij,ij->i", diff, diff)
        return np.sqrt(np.maximum(d2, 0.0))
    D = 1.0 - Za @ Zb.T
    D[D < 1e-12] = 0.0
    return D


def cross_distances(A, B, kind) -> np.ndarray:
    """All distances between rows of ``A`` and rows of ``B``."""
    kind = AffinityKind.parse(kind)
    return _cross(_prepare(A, kind), _prepare(B, kind), kind)


def iter_distance_rows(X, kind, block: int = _BLOCK_ROWS) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(start, rows)`` blocks of the full N x N distance matrix.

    Memory stays at ``block * N`` floats; the diagonal is exactly zero.
    """
    kind = AffinityKind.parse(kind)
    Z = _prepare(X, kind)
    n = Z.shape[0]
    for start in range(0, n, block):
        rows = _cross(Z[start : start + block], Z, kind)
        rows[np.arange(rows.shape[0]), np.arange(start, start + rows.shape[0])] = 0.0
        yield start, rows


def condensed_distances(X, kind) -> np.ndarray:
    """Strictly-lower-triangular distances, row-major: (1,0), (2,0), (2,1), ..."""
    kind = AffinityKind.parse(kind)
    Z = _prepare(X, kind)
    n = Z.shape[0]
    out = np.empty(n * (n - 1) // 2)
    for start in range(1, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        rows = _cross(Z[start:stop], Z[:stop], kind)
        for i in range(start, stop):
            offset = i * (i - 1) // 2
            out[offset : offset + i] = rows[i - start, :i]
    return out


def _squareform(condensed: np.ndarray, n: int) -> np.ndarray:
    D = np.zeros((n, n))
    rows, cols = np.tril_indices(n, k=-1)
    D[rows, cols] = condensed
    D[cols, rows] = condensed
    return D


@dataclass(frozen=True)
class AffinityGraph:
    """Dense symmetric pairwise-distance matrix with a zero diagonal."""

    dist: np.ndarray

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def lower_triangle(self) -> np.ndarray:
        return self.dist[np.tril_indices(self.n, k=-1)]


def pairwise_graph(X, kind) -> AffinityGraph:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise TransferabilityError("an affinity graph needs at least 2 samples")
    return AffinityGraph(_squareform(condensed_distances(X, kind), X.shape[0]))


def class_distance_table(n_classes: int, kind) -> np.ndarray:
    """Distances between the one-hot encodings of every pair of classes."""
    if n_classes < 2:
        raise TransferabilityError("label affinities need at least 2 classes")
    eye = np.eye(n_classes)
    return cross_distances(eye, eye, kind)


def condensed_label_distances(y, kind, n_classes: int | None = None) -> np.ndarray:
    """Lower-triangular one-hot label distances, in the order of :func:`condensed_distances`."""
    y = np.asarray(y)
    C = int(y.max()) + 1 if n_classes is None else n_classes
    table = class_distance_table(C, kind)
    n = y.shape[0]
    out = np.empty(n * (n - 1) // 2)
    for i in range(1, n):
        offset = i * (i - 1) // 2
        out[offset : offset + i] = table[y[i], y[:i]]
    return out


def label_graph(y, kind) -> AffinityGraph:
    y = np.asarray(y)
    if y.shape[0] < 2:
        raise TransferabilityError("an affinity graph needs at least 2 samples")
    return AffinityGraph(_squareform(condensed_label_distances(y, kind), y.shape[0]))
