"""Dataset data model, file formats and stratified subsampling.

Feature files use either the ``FMAT1`` binary layout::

    bytes 0-5    b"FMAT1\\n"
    bytes 6-9    N (uint32, little endian)
    bytes 10-13  D (uint32, little endian)
    bytes 14-    N*D float32 values, little endian, row-major

or plain CSV with one sample per line and no header. Label files hold one
base-10 integer per line.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError

FMAT_MAGIC = b"FMAT1\n"
_HEADER = struct.Struct("<II")
_HEADER_SIZE = len(FMAT_MAGIC) + _HEADER.size


def check_features(X, name: str = "features") -> np.ndarray:
    """Return ``X`` as a read-only float64 matrix after validating it."""
    # a read-only view avoids copying float64 input without exposing it to writes
    arr = np.asarray(X, dtype=np.float64).view()
    if arr.ndim != 2:
        raise DataError(f"{name}: expected a 2-D matrix, got shape {arr.shape}")
    n, d = arr.shape
    if n < 1 or d < 1:
        raise DataError(f"{name}: empty matrix of shape {arr.shape}")
    # a finite sum implies finite entries; otherwise locate the culprit
    # (the sum can also overflow on huge finite values, hence the exact recheck)
    with np.errstate(over="ignore", invalid="ignore"):
        total = arr.sum()
    if not np.isfinite(total) and not np.isfinite(arr).all():
        bad = ~np.isfinite(arr)
        row, col = np.argwhere(bad)[0]
        raise DataError(f"{name}: non-finite value at row {row + 1}, column {col + 1}")
    arr.setflags(write=False)
    return arr


def check_labels(y, name: str = "labels") -> np.ndarray:
    """Validate dense class ids ``0..C-1`` and return them as int64."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DataError(f"{name}: expected a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise DataError(f"{name}: empty dataset")
    if not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise DataError(f"{name}: labels must be integers")
        arr = as_int
    arr = arr.astype(np.int64, copy=True)
    if arr.min() < 0:
        raise DataError(f"{name}: negative class id {int(arr.min())}")
    counts = np.bincount(arr)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise DataError(f"{name}: class {int(missing[0])} unused (class ids must be dense)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Features of one candidate on one target task, with optional labels."""

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        features = self.features
        if isinstance(features, np.ndarray) and features.flags.writeable:
            # own the data so later writes by the caller cannot leak in
            features = features.copy()
        object.__setattr__(self, "features", check_features(features))
        if self.labels is not None:
            labels = check_labels(self.labels)
            if labels.shape[0] != self.features.shape[0]:
                raise DataError(
                    f"label count {labels.shape[0]} does not match "
                    f"sample count {self.features.shape[0]}"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.require_labels(), minlength=self.num_classes)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("this operation needs labels but the dataset has none")
        return self.labels

    def take(self, index: np.ndarray) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.features[index], labels)


# -- feature IO ---------------------------------------------------------------

def _infer_format(path: Path) -> str:
    return "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"


def load_features(path, format: str | None = None) -> np.ndarray:
    """Load a feature matrix from a ``binary`` (FMAT1) or ``csv`` file.

    Values are widened to float64. Errors name the offending row and column
    (both 1-based).
    """
    path = Path(path)
    fmt = format or _infer_format(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if fmt == "binary":
        return _load_fmat(path)
    if fmt == "csv":
        return _load_csv(path)
    raise DataError(f"unknown feature format {fmt!r} (expected 'binary' or 'csv')")


def _load_fmat(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _HEADER_SIZE or raw[: len(FMAT_MAGIC)] != FMAT_MAGIC:
        raise DataError(f"{path}: malformed header (missing FMAT1 magic)")
    n, d = _HEADER.unpack_from(raw, len(FMAT_MAGIC))
    if n < 1 or d < 1:
        raise DataError(f"{path}: malformed header (N={n}, D={d})")
    expected = _HEADER_SIZE + 4 * n * d
    if len(raw) != expected:
        raise DataError(f"{path}: malformed body, expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER_SIZE).reshape(n, d)
    try:
        return check_features(data.astype(np.float64))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataError(
                    f"{path}: row {lineno} has {len(fields)} columns, expected {width}"
                )
            try:
                values = [float(v) for v in fields]
            except ValueError:
                raise DataError(f"{path}: row {lineno} contains a non-numeric value") from None
            for col, v in enumerate(values, start=1):
                if not np.isfinite(v):
                    raise DataError(f"{path}: non-finite value at row {lineno}, column {col}")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: empty feature file")
    return check_features(rows)


def store_features(path, X, format: str | None = None) -> None:
    """Write ``X`` as FMAT1 (float32) or CSV. Binary writes are atomic."""
    path = Path(path)
    X = np.asarray(X, dtype=np.float64)
    fmt = format or _infer_format(path)
    if fmt == "binary":
        n, d = X.shape
        payload = FMAT_MAGIC + _HEADER.pack(n, d) + X.astype("<f4").tobytes(order="C")
        _atomic_write(path, payload)
    elif fmt == "csv":
        lines = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in X)
        _atomic_write(path, lines.encode())
    else:
        raise DataError(f"unknown feature format {fmt!r}")


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# -- label IO -----------------------------------------------------------------

def load_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    values = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line, 10))
        except ValueError:
            raise DataError(f"{path}: line {lineno} is not an integer: {line!r}") from None
    if not values:
        raise DataError(f"{path}: empty dataset")
    try:
        return check_labels(np.array(values, dtype=np.int64))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def store_labels(path, y) -> None:
    y = check_labels(y)
    _atomic_write(Path(path), "".join(f"{int(v)}\n" for v in y).encode())


# -- true fine-tuning performances ----------------------------------------------

@dataclass(frozen=True)
class TruePerformanceTable:
    """Per-task true performance of every candidate, in a fixed candidate order.

    Serialised as ``{"task": [["candidate", value], ...], ...}``.
    """

    tasks: dict

    def __post_init__(self):
        if not self.tasks:
            raise DataError("truth table has no tasks")
        normalised = {}
        order = None
        for task, entries in self.tasks.items():
            pairs = [(str(name), float(value)) for name, value in entries]
            names = [name for name, _ in pairs]
            if not names:
                raise DataError(f"truth table: task {task!r} lists no candidates")
            if len(set(names)) != len(names):
                raise DataError(f"truth table: task {task!r} repeats a candidate")
            if order is None:
                order = names
            elif names != order:
                raise DataError(
                    f"truth table: task {task!r} lists candidates {names}, expected {order}"
                )
            for name, value in pairs:
                if not np.isfinite(value) or not -100.0 <= value <= 100.0:
                    raise DataError(f"truth table: {task}/{name} value {value} outside [-100, 100]")
            normalised[str(task)] = pairs
        object.__setattr__(self, "tasks", normalised)

    @property
    def candidates(self) -> list[str]:
        first = next(iter(self.tasks.values()))
        return [name for name, _ in first]

    def values(self, task: str) -> np.ndarray:
        try:
            return np.array([v for _, v in self.tasks[task]])
        except KeyError:
            raise DataError(f"truth table has no task {task!r}") from None

    def to_json(self) -> dict:
        return {task: [[name, value] for name, value in pairs] for task, pairs in self.tasks.items()}

    @classmethod
    def load(cls, path) -> "TruePerformanceTable":
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except FileNotFoundError:
            raise DataError(f"{path}: no such file") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(payload, dict):
            raise DataError(f"{path}: expected a JSON object of task -> [[candidate, value], ...]")
        return cls(payload)

    def dump(self, path) -> None:
        _atomic_write(Path(path), (json.dumps(self.to_json(), indent=2) + "\n").encode())


def glue_truth() -> TruePerformanceTable:
    """Best published GLUE dev scores of the six reference candidates."""
    return TruePerformanceTable.load(Path(__file__).with_name("data") / "glue_truth.json")


# -- stratified subsampling -------------------------------------------------------

def allocate_largest_remainder(counts: Iterable[int], cap: int) -> np.ndarray:
    """Split ``cap`` across classes proportionally to ``counts``.

    Floors of the exact quotas are topped up by largest fractional part (ties
    go to the lower class id). Every class keeps at least one sample.
    """
    counts = np.asarray(list(counts), dtype=np.int64)
    total = counts.sum()
    exact = cap * counts / total
    alloc = np.floor(exact).astype(np.int64)
    remainder = cap - alloc.sum()
    order = sorted(range(len(counts)), key=lambda c: (-(exact[c] - alloc[c]), c))
    for c in order[:remainder]:
        alloc[c] += 1
    # rare classes may round to zero; borrow from the largest allocation
    for c in np.flatnonzero(alloc == 0):
        donor = int(np.argmax(alloc))
        alloc[donor] -= 1
        alloc[c] += 1
    return alloc


def stratified_index(y: np.ndarray, cap: int, seed: int) -> np.ndarray:
    """Sorted indices of a class-proportional subsample of at most ``cap`` rows."""
    y = check_labels(y)
    n_classes = int(y.max()) + 1
    if cap < n_classes:
        raise DataError(f"cap {cap} is smaller than the number of classes {n_classes}")
    if y.shape[0] <= cap:
        return np.arange(y.shape[0])
    alloc = allocate_largest_remainder(np.bincount(y, minlength=n_classes), cap)
    rng = np.random.default_rng(seed)
    keep = []
    for c in range(n_classes):
        members = np.flatnonzero(y == c)
        keep.append(rng.permutation(members)[: alloc[c]])
    return np.sort(np.concatenate(keep))


def subsample_stratified(ds: Dataset, cap: int, seed: int) -> Dataset:
    """Keep at most ``cap`` samples while preserving class proportions.

    Deterministic in ``(ds, cap, seed)``; retained samples stay in their
    original order.
    """
    index = stratified_index(ds.require_labels(), cap, seed)
    if index.size == ds.n_samples:
        return ds
    return ds.take(index)
