"""Synthetic candidate families with a known ground-truth ranking.

Candidate ``i`` places the class means on a rotated simplex scaled by
``schedule[i]`` and adds unit isotropic Gaussian noise, so larger spreads are
easier to separate. Every candidate shares one label vector. The "true
performance" of a candidate is the held-out accuracy of a linear probe.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, TruePerformanceTable, store_features, store_labels
from .errors import ConfigError, TransferabilityError
from .estimators import METHOD_IDS
from .numerics import fit_logistic

PROBE_SEEDS = 5


@dataclass(frozen=True)
class SyntheticSpec:
    num_candidates: int
    samples_per_class: int
    num_classes: int
    dim: int
    schedule: tuple
    seed: int = 0
    task: str = "synthetic"
    target_spread: float | None = None

    def __post_init__(self):
        schedule = tuple(float(s) for s in self.schedule)
        object.__setattr__(self, "schedule", schedule)
        if self.num_candidates < 2:
            raise ConfigError("a synthetic family needs at least 2 candidates")
        if self.num_classes < 2:
            raise ConfigError("a synthetic family needs at least 2 classes")
        if self.samples_per_class < 2:
            raise ConfigError("samples_per_class must be at least 2")
        if self.dim < self.num_classes:
            raise ConfigError(f"dim {self.dim} cannot hold a {self.num_classes}-class simplex")
        if len(schedule) != self.num_candidates:
            raise ConfigError(
                f"schedule has {len(schedule)} values for {self.num_candidates} candidates"
            )
        if schedule[0] <= 0:
            raise ConfigError("separability schedule values must be positive")
        if any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ConfigError("separability schedule must be strictly increasing")

    @classmethod
    def from_dict(cls, payload: dict) -> "SyntheticSpec":
        payload = dict(payload)
        sched = payload.get("schedule")
        if isinstance(sched, dict):
            payload["schedule"] = geometric_schedule(
                sched["start"], sched["stop"], payload["num_candidates"]
            )
        try:
            return cls(**payload)
        except TypeError as exc:
            raise ConfigError(f"invalid synthetic spec: {exc}") from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schedule"] = list(self.schedule)
        return out

    @property
    def candidate_names(self) -> list[str]:
        return [f"cand{i:02d}" for i in range(self.num_candidates)]


def geometric_schedule(start: float, stop: float, n: int) -> tuple:
    return tuple(float(v) for v in np.geomspace(start, stop, n))


@dataclass
class SyntheticFamily:
    spec: SyntheticSpec
    labels: np.ndarray
    features: dict
    target_features: np.ndarray
    oracle: dict = field(default_factory=dict)

    def dataset(self, name: str) -> Dataset:
        return Dataset(self.features[name], self.labels)

    def truth(self) -> TruePerformanceTable:
        return TruePerformanceTable(
            {self.spec.task: [[name, 100.0 * self.oracle[name]] for name in self.spec.candidate_names]}
        )


def _random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _draw(rng, labels, spread, C, d) -> np.ndarray:
    means = spread * np.eye(C, d) @ _random_rotation(rng, d)
    X = means[labels] + rng.standard_normal((labels.shape[0], d))
    # round through float32 so in-memory features equal what FMAT stores
    return X.astype(np.float32).astype(np.float64)


def oracle_probe(X, y, seed: int) -> float:
    """Held-out accuracy of an L2 softmax probe on a stratified 70/30 split."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    C = int(y.max()) + 1
    if C < 2:
        raise TransferabilityError("the oracle probe needs at least 2 classes")
    rng = np.random.default_rng(seed)
    train = np.zeros(y.shape[0], dtype=bool)
    for c in range(C):
        members = rng.permutation(np.flatnonzero(y == c))
        n_train = int(round(0.7 * members.size))
        if n_train < 1 or n_train >= members.size:
            raise TransferabilityError(f"class {c} with {members.size} samples is too small to split")
        train[members[:n_train]] = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = fit_logistic(X[train], y[train], l2=1.0, n_classes=C)
    return float(np.mean(model.predict(X[~train]) == y[~train]))


def generate_family(spec: SyntheticSpec, probe_seeds: int = PROBE_SEEDS) -> SyntheticFamily:
    """Draw every candidate's features and score them with the oracle probe.

    Oracle accuracies are means over ``probe_seeds`` probe splits.
    """
    rng = np.random.default_rng(spec.seed)
    C, d = spec.num_classes, spec.dim
    labels = rng.permutation(np.repeat(np.arange(C), spec.samples_per_class))
    features = {}
    for name, spread in zip(spec.candidate_names, spec.schedule):
        features[name] = _draw(rng, labels, spread, C, d)
    target_spread = spec.target_spread or 2.0 * spec.schedule[-1]
    target = _draw(rng, labels, target_spread, C, d)
    family = SyntheticFamily(spec, labels, features, target)
    for name in spec.candidate_names:
        accs = [oracle_probe(features[name], labels, spec.seed * 1000 + s) for s in range(probe_seeds)]
        family.oracle[name] = float(np.mean(accs))
    return family


def write_family(family: SyntheticFamily, out_dir, methods=None) -> Path:
    """Write FMAT features, labels, truth JSON and a ready-to-run bench config.

    Returns the path of the bench config.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = family.spec
    feature_paths = {}
    for name in spec.candidate_names:
        store_features(out / f"{name}.fmat", family.features[name])
        feature_paths[name] = f"{name}.fmat"
    store_features(out / "target.fmat", family.target_features)
    store_labels(out / "labels.txt", family.labels)
    family.truth().dump(out / "truth.json")
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    config = {
        "tasks": [
            {
                "name": spec.task,
                "labels": "labels.txt",
                "features": feature_paths,
                "target_features": "target.fmat",
            }
        ],
        "methods": [{"method": m} for m in (methods or METHOD_IDS)],
        "seeds": [0, 1, 2, 3, 4],
        "sample_cap": 10000,
        "truth": "truth.json",
        "output": "report.json",
    }
    path = out / "bench_config.json"
    path.write_text(json.dumps(config, indent=2) + "\n")
    return path
