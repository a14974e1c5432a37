"""Transferability estimators and the uniform :func:`estimate` entry point.

Every estimator returns a score where larger means "predicted to transfer
better".
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..affinity import AffinityKind
from ..dataset import Dataset, check_features
from ..errors import ConfigError, TransferabilityError
from ..numerics import pca_fit_transform
from .loss import (
    h_score,
    logme_score,
    nleep_score,
    pactran_score,
    reg_h_score,
    sfda_score,
    transrate_score,
)
from .separability import gbc_score, knn_score, logistic_score, msc_score, parc_score
from .similarity import dse_score, rsa_score

PCA_DIMS = (16, 32, 64, 128, 256, 512, 768)
KNN_KS = (1, 3, 5, 7)

SIMILARITY_METHODS = ("dse", "rsa")
GRAPH_METHODS = ("rsa", "knn", "msc", "parc")
AFFINITY_METHODS = ("dse", "rsa", "msc", "knn", "parc")
METHOD_IDS = (
    "dse", "rsa", "msc", "knn", "parc", "gbc", "logistic",
    "hscore", "reg_hscore", "nleep", "transrate", "logme", "sfda", "pactran",
)

DEFAULT_DIMS = {
    "dse": 768, "hscore": 768, "reg_hscore": 768,
    "rsa": 512, "logme": 512, "sfda": 512, "parc": 512,
    "msc": 256,
    "knn": 64, "gbc": 64, "logistic": 64, "nleep": 64, "transrate": 64, "pactran": 64,
}
DEFAULT_AFFINITY = {
    "dse": AffinityKind.EUCLIDEAN,
    "rsa": AffinityKind.CORRELATION,
    "parc": AffinityKind.CORRELATION,
    "knn": AffinityKind.CORRELATION,
    "msc": AffinityKind.COSINE,
}

_JSON_ALIASES = {"lambda": "lam"}


@dataclass(frozen=True)
class MethodConfig:
    """Hyperparameters for one estimator. ``None`` means the method default."""

    method: str
    pca_dim: int | None = None
    affinity: AffinityKind | None = None
    k: int = 5
    lam: float = 1.0
    sigma0_sq: float = 10.0
    epsilon: float = 1e-4
    gmm_multiplier: int = 5
    cv_folds: int = 5
    shrink: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHOD_IDS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.affinity is not None:
            object.__setattr__(self, "affinity", AffinityKind.parse(self.affinity))
        if self.pca_dim is not None and self.pca_dim not in PCA_DIMS:
            raise ConfigError(f"pca_dim must be one of {PCA_DIMS}, got {self.pca_dim}")
        if self.k not in KNN_KS:
            raise ConfigError(f"k must be one of {KNN_KS}, got {self.k}")
        if self.lam <= 0 or self.sigma0_sq <= 0:
            raise ConfigError("lambda and sigma0_sq must be positive")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.gmm_multiplier < 1:
            raise ConfigError("gmm_multiplier must be at least 1")
        if not 0.0 <= self.shrink <= 1.0:
            raise ConfigError("shrink must lie in [0, 1]")

    @property
    def effective_dim(self) -> int:
        return self.pca_dim if self.pca_dim is not None else DEFAULT_DIMS[self.method]

    @property
    def effective_affinity(self) -> AffinityKind | None:
        if self.method not in AFFINITY_METHODS:
            return None
        return self.affinity or DEFAULT_AFFINITY[self.method]

    @property
    def needs_aux(self) -> bool:
        return self.method in SIMILARITY_METHODS

    @property
    def graph_based(self) -> bool:
        return self.method in GRAPH_METHODS

    @classmethod
    def from_dict(cls, payload: dict) -> "MethodConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in payload.items():
            key = _JSON_ALIASES.get(key, key)
            if key not in known:
                raise ConfigError(f"unknown method option {key!r}")
            kwargs[key] = value
        if "method" not in kwargs:
            raise ConfigError("method config needs a 'method' field")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        if self.affinity is not None:
            out["affinity"] = self.affinity.value
        return out


@dataclass(frozen=True)
class ScoreRecord:
    method: str
    candidate: str
    score: float
    estimate_seconds: float
    seed: int
    task: str = ""
    dim: int | None = None
    affinity: str | None = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise TransferabilityError(f"{self.method}: non-finite score {self.score}")
        if self.estimate_seconds < 0:
            raise TransferabilityError("estimate_seconds must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_dim(requested: int, n_samples: int, n_dims: int) -> tuple[int, list[str]]:
    """Clamp a PCA dimension to what the data supports; return it with warnings."""
    notes = []
    dim = requested
    if dim > n_dims:
        notes.append(f"dim {requested} exceeds feature dimension {n_dims}; clamped to {n_dims}")
        dim = n_dims
    if dim < n_dims and dim > n_samples:
        notes.append(f"dim {dim} exceeds sample count {n_samples}; clamped to {n_samples}")
        dim = n_samples
    return dim, notes


def _reduce(X: np.ndarray, dim: int) -> np.ndarray:
    if dim >= X.shape[1]:
        return X
    return pca_fit_transform(X, dim)[1]


def _dispatch(cfg: MethodConfig, X, y, aux, affinity):
    m = cfg.method
    if m == "dse":
        return dse_score(X, aux, affinity)
    if m == "rsa":
        return rsa_score(X, aux, affinity)
    if m == "msc":
        return msc_score(X, y, affinity)
    if m == "knn":
        return knn_score(X, y, cfg.k, affinity)
    if m == "parc":
        return parc_score(X, y, affinity)
    if m == "gbc":
        return gbc_score(X, y)
    if m == "logistic":
        return logistic_score(X, y, cfg.cv_folds, cfg.seed)
    if m == "hscore":
        return h_score(X, y)
    if m == "reg_hscore":
        return reg_h_score(X, y)
    if m == "nleep":
        return nleep_score(X, y, cfg.gmm_multiplier, cfg.seed)
    if m == "transrate":
        return transrate_score(X, y, cfg.epsilon)
    if m == "logme":
        return logme_score(X, y)
    if m == "sfda":
        return sfda_score(X, y, cfg.shrink, cfg.seed)
    if m == "pactran":
        return pactran_score(X, y, cfg.lam, cfg.sigma0_sq, cfg.seed)
    raise ConfigError(f"unknown method {m!r}")


def estimate(
    cfg: MethodConfig,
    ds: Dataset,
    aux=None,
    candidate: str = "",
    task: str = "",
) -> ScoreRecord:
    """Reduce features by PCA, run the configured estimator and time it.

    ``aux`` holds target-model features and is required exactly for the
    model-similarity methods. The timing covers PCA and scoring, not loading.
    """
    if cfg.needs_aux and aux is None:
        raise ConfigError(f"{cfg.method} needs target-model features (aux)")
    if not cfg.needs_aux and aux is not None:
        raise ConfigError(f"{cfg.method} does not take target-model features")
    if not cfg.needs_aux and ds.labels is None:
        raise ConfigError(f"{cfg.method} needs labels")
    if aux is not None:
        aux = check_features(aux, "target features")
        if aux.shape[0] != ds.n_samples:
            raise ConfigError(f"target features have {aux.shape[0]} rows, expected {ds.n_samples}")

    dim, notes = resolve_dim(cfg.effective_dim, ds.n_samples, ds.dim)
    affinity = cfg.effective_affinity

    start = time.perf_counter()
    X = _reduce(ds.features, dim)
    aux_reduced = None
    if aux is not None:
        aux_dim, aux_notes = resolve_dim(cfg.effective_dim, aux.shape[0], aux.shape[1])
        notes += [f"target: {n}" for n in aux_notes]
        aux_reduced = _reduce(aux, aux_dim)
    score = _dispatch(cfg, X, ds.labels, aux_reduced, affinity)
    elapsed = time.perf_counter() - start

    return ScoreRecord(
        method=cfg.method,
        candidate=candidate,
        score=float(score),
        estimate_seconds=elapsed,
        seed=cfg.seed,
        task=task,
        dim=dim,
        affinity=affinity.value if affinity is not None else None,
        warnings=notes,
    )


__all__ = [
    "MethodConfig", "ScoreRecord", "estimate", "resolve_dim",
    "METHOD_IDS", "GRAPH_METHODS", "SIMILARITY_METHODS", "AFFINITY_METHODS",
    "DEFAULT_DIMS", "DEFAULT_AFFINITY", "PCA_DIMS",
    "dse_score", "rsa_score", "msc_score", "knn_score", "parc_score", "gbc_score",
    "logistic_score", "h_score", "reg_h_score", "nleep_score", "transrate_score",
    "logme_score", "sfda_score", "pactran_score",
]
