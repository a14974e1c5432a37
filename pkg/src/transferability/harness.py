"""Benchmark runner: sweeps methods x dims x affinities x tasks x candidates x seeds."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import AffinityKind
from .dataset import Dataset, TruePerformanceTable, load_features, load_labels, stratified_index
from .errors import ConfigError, TransferabilityError
from .estimators import (
    AFFINITY_METHODS,
    PCA_DIMS,
    MethodConfig,
    ScoreRecord,
    estimate,
)
from .evaluation import aggregate

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_CAP = 10_000
SELECTION_CRITERION = "mean_spearman"

DISPLAY_NAMES = {
    "dse": "DSE", "rsa": "RSA", "msc": "MSC", "knn": "kNN", "parc": "PARC", "gbc": "GBC",
    "logistic": "Logistic", "hscore": "H-Score", "reg_hscore": "Reg. H-Score",
    "nleep": "NLEEP", "transrate": "TransRate", "logme": "LogME", "sfda": "SFDA",
    "pactran": "PACTran",
}


@dataclass(frozen=True)
class TaskSpec:
    name: str
    labels: Path
    features: dict
    target_features: Path | None = None


@dataclass(frozen=True)
class BenchmarkConfig:
    tasks: list
    methods: list
    truth: Path
    output: Path | None = None
    dims: list = field(default_factory=list)
    affinities: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    sample_cap: int = DEFAULT_SAMPLE_CAP
    source: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, payload: dict, base_dir=".") -> "BenchmarkConfig":
        base = Path(base_dir)
        known = {"tasks", "methods", "dims", "affinities", "seeds", "sample_cap", "truth", "output"}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")

        def resolve(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        tasks = []
        for t in payload.get("tasks") or []:
            try:
                tasks.append(
                    TaskSpec(
                        name=str(t["name"]),
                        labels=resolve(t["labels"]),
                        features={str(k): resolve(v) for k, v in t["features"].items()},
                        target_features=resolve(t.get("target_features")),
                    )
                )
            except (KeyError, AttributeError, TypeError) as exc:
                raise ConfigError(f"task entry {t!r} is missing {exc}") from None
        methods = [MethodConfig.from_dict(m) for m in payload.get("methods") or []]
        if "truth" not in payload:
            raise ConfigError("config needs a 'truth' path")
        cfg = cls(
            tasks=tasks,
            methods=methods,
            truth=resolve(payload["truth"]),
            output=resolve(payload.get("output")),
            dims=[int(d) for d in payload.get("dims") or []],
            affinities=[AffinityKind.parse(a) for a in payload.get("affinities") or []],
            seeds=[int(s) for s in payload.get("seeds", [0, 1, 2, 3, 4])],
            sample_cap=int(payload.get("sample_cap", DEFAULT_SAMPLE_CAP)),
            source=payload,
        )
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such config file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(payload, path.parent)

    def check(self) -> None:
        if not self.tasks:
            raise ConfigError("config needs at least one task")
        if not self.methods:
            raise ConfigError("config needs at least one method")
        if not self.seeds:
            raise ConfigError("config needs at least one seed")
        bad = [d for d in self.dims if d not in PCA_DIMS]
        if bad:
            raise ConfigError(f"sweep dims {bad} not in {PCA_DIMS}")
        if self.sample_cap < 2:
            raise ConfigError("sample_cap must be at least 2")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ConfigError("task names must be unique")
        for m in self.methods:
            if m.needs_aux:
                missing = [t.name for t in self.tasks if t.target_features is None]
                if missing:
                    raise ConfigError(f"{m.method} needs target_features for tasks {missing}")

    def digest(self) -> str:
        canonical = json.dumps(self.source, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()


def derive_seed(*parts) -> int:
    """Stable 31-bit seed from the given parts, independent of scheduling."""
    text = "/".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little") & 0x7FFFFFFF


@dataclass
class _LoadedTask:
    name: str
    labels: np.ndarray
    features: dict
    target: np.ndarray | None


def _load_all(cfg: BenchmarkConfig, truth: TruePerformanceTable) -> list[_LoadedTask]:
    """Load and cross-check every referenced file before any estimation."""
    problems = []
    loaded = []
    candidates = truth.candidates
    for task in cfg.tasks:
        if task.name not in truth.tasks:
            problems.append(f"task {task.name!r} missing from truth table")
        if set(task.features) != set(candidates):
            problems.append(
                f"task {task.name!r} candidates {sorted(task.features)} differ from truth {candidates}"
            )
        try:
            labels = load_labels(task.labels)
        except TransferabilityError as exc:
            problems.append(str(exc))
            continue
        feats = {}
        for cand in candidates:
            path = task.features.get(cand)
            if path is None:
                continue
            try:
                X = load_features(path)
            except TransferabilityError as exc:
                problems.append(str(exc))
                continue
            if X.shape[0] != labels.shape[0]:
                problems.append(f"{path}: {X.shape[0]} rows but {labels.shape[0]} labels")
            feats[cand] = X
        target = None
        if task.target_features is not None:
            try:
                target = load_features(task.target_features)
                if target.shape[0] != labels.shape[0]:
                    problems.append(
                        f"{task.target_features}: {target.shape[0]} rows but {labels.shape[0]} labels"
                    )
            except TransferabilityError as exc:
                problems.append(str(exc))
        loaded.append(_LoadedTask(task.name, labels, feats, target))
    if problems:
        raise ConfigError("invalid benchmark inputs:\n  " + "\n  ".join(problems))
    return loaded


@dataclass(frozen=True)
class _Combo:
    label: str
    cfg: MethodConfig
    dim: int
    affinity: AffinityKind | None


def _method_labels(methods: list[MethodConfig]) -> list[str]:
    seen = {}
    labels = []
    for m in methods:
        seen[m.method] = seen.get(m.method, 0) + 1
        labels.append(m.method if seen[m.method] == 1 else f"{m.method}#{seen[m.method]}")
    return labels


def sweep_grid(cfg: BenchmarkConfig, max_dim: int) -> tuple[list[_Combo], list[dict]]:
    """Cartesian sweep per method, plus skip records for dims above ``max_dim``.

    A method's own ``pca_dim``/``affinity`` pins that axis; otherwise the
    config sweep lists apply, falling back to the method defaults.
    """
    combos, skipped = [], []
    if cfg.dims and not dims_in_range(cfg.dims, max_dim):
        raise ConfigError(f"no sweep dim in {cfg.dims} fits features of width {max_dim}")
    for label, m in zip(_method_labels(cfg.methods), cfg.methods):
        if m.pca_dim is not None:
            dims = [m.pca_dim]
        elif cfg.dims:
            dims = list(cfg.dims)
        else:
            dims = [m.effective_dim]
        if m.method not in AFFINITY_METHODS:
            affinities = [None]
        elif m.affinity is not None:
            affinities = [m.affinity]
        elif cfg.affinities:
            affinities = list(cfg.affinities)
        else:
            affinities = [m.effective_affinity]
        explicit_sweep = m.pca_dim is None and bool(cfg.dims)
        for d in dims:
            for a in affinities:
                if explicit_sweep and d > max_dim:
                    skipped.append({
                        "method": label,
                        "dim": d,
                        "affinity": a.value if a else None,
                        "reason": f"dim {d} exceeds the widest candidate feature dimension {max_dim}",
                    })
                    continue
                combos.append(_Combo(label, m, d, a))
    return combos, skipped


def dims_in_range(dims, n_dims: int) -> list[int]:
    """The sweep dims usable on ``n_dims``-dimensional features."""
    return [d for d in dims if 1 <= d <= n_dims]


def prepare_dataset(cfg: MethodConfig, ds: Dataset, target, cap: int, seed: int):
    """Apply the graph-method sample cap; returns ``(dataset, target, note)``."""
    if not cfg.graph_based or ds.n_samples <= cap:
        return ds, target, None
    sub_index = stratified_index(ds.labels, cap, seed)
    note = f"subsampled {ds.n_samples} -> {sub_index.size} samples (stratified)"
    return ds.take(sub_index), None if target is None else target[sub_index], note


def _run_job(job) -> tuple[ScoreRecord | None, str | None]:
    combo, task, cand, master, cap = job
    cfg = replace(
        combo.cfg,
        pca_dim=combo.dim,
        affinity=combo.affinity,
        seed=derive_seed(master, combo.label, cand, task.name),
    )
    ds = Dataset(task.features[cand], task.labels)
    target = task.target if cfg.needs_aux else None
    ds, target, note = prepare_dataset(cfg, ds, target, cap, derive_seed(master, "subsample", task.name))
    try:
        rec = estimate(cfg, ds, target, candidate=cand, task=task.name)
    except TransferabilityError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    notes = list(rec.warnings) + ([note] if note else [])
    return replace(rec, method=combo.label, seed=master, warnings=notes), None


def run_benchmark(cfg: BenchmarkConfig, workers: int = 1, write: bool = True) -> dict:
    """Run the full sweep and return (and optionally write) the report document."""
    truth = TruePerformanceTable.load(cfg.truth)
    tasks = _load_all(cfg, truth)
    max_dim = max(X.shape[1] for t in tasks for X in t.features.values())
    combos, skipped = sweep_grid(cfg, max_dim)
    if not combos:
        raise ConfigError(f"no sweep dimension fits features of width {max_dim}")

    jobs = [
        (combo, task, cand, master, cfg.sample_cap)
        for combo in combos
        for task in tasks
        for master in cfg.seeds
        for cand in truth.candidates
    ]
    log.info("running %d estimations on %d worker(s)", len(jobs), workers)
    if workers <= 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))

    cells = []
    for combo in combos:
        key = (combo.label, combo.dim, combo.affinity)
        aff = combo.affinity.value if combo.affinity else None
        for task in tasks:
            recs, errors = [], []
            for job, (rec, err) in zip(jobs, results):
                jcombo, jtask = job[0], job[1]
                if (jcombo.label, jcombo.dim, jcombo.affinity) != key or jtask.name != task.name:
                    continue
                if err is not None:
                    errors.append(err)
                else:
                    recs.append(rec)
            if errors:
                skipped.append({
                    "method": combo.label, "dim": combo.dim, "affinity": aff,
                    "task": task.name, "reason": sorted(set(errors))[0],
                })
                continue
            report = aggregate(recs, _single_task(truth, task.name))
            cell = report.cells[0]
            cell.update(
                dim=combo.dim,
                applied_dims=sorted({r.dim for r in recs}),
                affinity=aff,
                warnings=sorted({w for r in recs for w in r.warnings}),
            )
            cells.append(cell)

    aggregates = {}
    for combo in combos:
        aff = combo.affinity.value if combo.affinity else None
        mine = [c for c in cells if c["method"] == combo.label and c["dim"] == combo.dim and c["affinity"] == aff]
        if len(mine) != len(tasks):
            continue
        spearmans = [c["spearman"] for c in mine if c["spearman"] is not None]
        aggregates.setdefault(combo.label, {"method": combo.cfg.method, "grid": []})["grid"].append({
            "dim": combo.dim,
            "applied_dims": sorted({d for c in mine for d in c["applied_dims"]}),
            "affinity": aff,
            "mrr": float(np.mean([c["reciprocal_rank"] for c in mine])),
            "mean_spearman": float(np.mean(spearmans)) if spearmans else None,
            "mean_estimate_seconds": float(np.mean([c["estimate_seconds"] for c in mine])),
        })
    for entry in aggregates.values():
        entry["best"] = max(
            entry["grid"],
            key=lambda g: (g["mean_spearman"] if g["mean_spearman"] is not None else -np.inf, g["mrr"]),
        )

    document = {
        "metadata": {
            "package_version": __version__,
            "config_digest": cfg.digest(),
            "seeds": list(cfg.seeds),
            "sample_cap": cfg.sample_cap,
            "workers": workers,
            "selection_criterion": SELECTION_CRITERION,
            "candidates": truth.candidates,
            "tasks": [t.name for t in tasks],
        },
        "cells": cells,
        "skipped": skipped,
        "aggregates": aggregates,
    }
    if write and cfg.output is not None:
        write_report(document, cfg.output)
    return document


def _single_task(truth: TruePerformanceTable, task: str) -> TruePerformanceTable:
    return TruePerformanceTable({task: truth.tasks[task]})


def write_report(document: dict, path) -> None:
    """Atomic JSON write (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(json.dumps(document, indent=2) + "\n")
    os.replace(tmp, path)


def strip_timing(obj):
    """Copy of a report with every ``*seconds`` field removed."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if not k.endswith("seconds")}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def _fmt(value, spec=".2f"):
    return "-" if value is None else format(value, spec)


def render_markdown(document: dict) -> str:
    """Table of the best sweep combination per method: MRR, mean Spearman, mean time."""
    lines = [
        "| Method | Dim | Affinity | MRR | mu_rho | mu_et |",
        "|---|---|---|---|---|---|",
    ]
    aggregates = document.get("aggregates", {})
    order = ["dse", "rsa", "msc", "knn", "parc", "gbc", "logistic", "hscore",
             "reg_hscore", "nleep", "transrate", "logme", "sfda", "pactran"]
    labels = sorted(aggregates, key=lambda k: (order.index(aggregates[k]["method"]), k))
    similarity = [k for k in labels if aggregates[k]["method"] in ("dse", "rsa")]
    free = [k for k in labels if k not in similarity]
    for title, group in (("Model similarity-based", similarity), ("Training-free", free)):
        if not group:
            continue
        lines.append(f"| *{title}* | | | | | |")
        for label in group:
            best = aggregates[label]["best"]
            name = DISPLAY_NAMES.get(aggregates[label]["method"], label) + label[len(aggregates[label]["method"]):]
            applied = best.get("applied_dims") or [best["dim"]]
            dim = str(best["dim"]) if applied == [best["dim"]] else f"{best['dim']} (as {'/'.join(map(str, applied))})"
            lines.append(
                f"| {name} | {dim} | {best['affinity'] or '-'} | {_fmt(best['mrr'])} | "
                f"{_fmt(best['mean_spearman'])} | {_fmt(best['mean_estimate_seconds'], '.1f')}s |"
            )
    return "\n".join(lines) + "\n"
