"""Ranking metrics against true fine-tuning performance."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.stats import rankdata

from .dataset import TruePerformanceTable
from .errors import DegenerateInputError, TransferabilityError


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a @ a) * (b @ b))
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks for ties."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise TransferabilityError(f"spearman: lengths differ ({a.size} vs {b.size})")
    if a.size < 3:
        raise TransferabilityError(f"spearman needs at least 3 values, got {a.size}")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateInputError("spearman undefined for a constant list")
    return _pearson(rankdata(a), rankdata(b))


def reciprocal_rank(scores, truth) -> float:
    """``1 / r`` where ``r`` is the rank the scores give to the truly best candidate.

    Ranks are 1-based in descending score order; tied scores share the mean
    rank of their block.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if scores.shape != truth.shape or scores.size < 1:
        raise TransferabilityError("reciprocal_rank needs two non-empty lists of equal length")
    best = int(np.argmax(truth))
    if np.count_nonzero(truth == truth[best]) > 1:
        raise DegenerateInputError("several candidates share the best true performance")
    descending_rank = rankdata(-scores)
    return float(1.0 / descending_rank[best])


@dataclass(frozen=True)
class EvalReport:
    """Per-(method, task) cells plus per-method aggregates."""

    cells: list
    methods: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"metadata": self.metadata, "cells": self.cells, "aggregates": self.methods}


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def aggregate(records: Iterable, truth: TruePerformanceTable, metadata: dict | None = None) -> EvalReport:
    """Average scores over seeds, then rank them against ``truth`` per task.

    ``records`` are :class:`~transferability.estimators.ScoreRecord`-like
    objects with ``method``, ``task``, ``candidate``, ``seed``, ``score`` and
    ``estimate_seconds``. Each cell's ``estimate_seconds`` is the time to score
    every candidate once (summed over candidates, averaged over seeds).
    """
    grouped = defaultdict(lambda: defaultdict(list))
    for rec in records:
        grouped[(rec.method, rec.task)][rec.candidate].append(rec)
    if not grouped:
        raise TransferabilityError("no score records to aggregate")

    candidates = truth.candidates
    methods = sorted({m for m, _ in grouped})
    tasks = sorted({t for _, t in grouped})
    missing = []
    for m in methods:
        for t in tasks:
            got = grouped.get((m, t), {})
            for cand in candidates:
                if not got.get(cand):
                    missing.append(f"{m}/{t}/{cand}")
    if missing:
        raise TransferabilityError("missing score records: " + ", ".join(missing))

    cells = []
    per_method = defaultdict(list)
    for m in methods:
        for t in tasks:
            by_cand = grouped[(m, t)]
            extra = set(by_cand) - set(candidates)
            if extra:
                raise TransferabilityError(f"{m}/{t}: candidates {sorted(extra)} are not in the truth table")
            mean_scores, seconds = [], []
            seeds = set()
            for cand in candidates:
                recs = sorted(by_cand[cand], key=lambda r: r.seed)
                mean_scores.append(float(np.mean([r.score for r in recs])))
                seconds.append(float(np.mean([r.estimate_seconds for r in recs])))
                seeds.update(r.seed for r in recs)
            true_values = truth.values(t)
            cell = {
                "method": m,
                "task": t,
                "candidates": candidates,
                "scores": mean_scores,
                "truth": true_values.tolist(),
                "seeds": sorted(seeds),
                "reciprocal_rank": reciprocal_rank(mean_scores, true_values),
                "spearman": None,
                "estimate_seconds": float(np.sum(seconds)),
            }
            try:
                cell["spearman"] = spearman(mean_scores, true_values)
            except DegenerateInputError:
                # a constant prediction carries no ranking information
                cell["spearman"] = 0.0
                cell["note"] = "constant scores; spearman set to 0"
            except TransferabilityError:
                cell["note"] = "fewer than 3 candidates; spearman undefined"
            cells.append(cell)
            per_method[m].append(cell)

    summary = {}
    for m, mcells in per_method.items():
        summary[m] = {
            "mrr": float(np.mean([c["reciprocal_rank"] for c in mcells])),
            "mean_spearman": _mean_or_none(c["spearman"] for c in mcells),
            "mean_estimate_seconds": float(np.mean([c["estimate_seconds"] for c in mcells])),
            "tasks": len(mcells),
        }
    return EvalReport(cells, summary, dict(metadata or {}))
