"""Command-line interface: ``score``, ``bench``, ``report`` and ``synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import Dataset, load_features, load_labels
from .errors import ConfigError, TransferabilityError
from .estimators import MethodConfig, estimate


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors follow the same exit-1 + JSON convention as runtime errors
    def error(self, message):
        raise _UsageError(message)


def _emit_error(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": message, "type": kind}) + "\n")
    return 1


def _cmd_score(args) -> int:
    options = {"method": args.method}
    for key in ("dim", "affinity", "k", "seed", "lam", "sigma0_sq", "epsilon", "shrink", "cv_folds"):
        value = getattr(args, key)
        if value is not None:
            options["pca_dim" if key == "dim" else key] = value
    cfg = MethodConfig(**options)
    X = load_features(args.features)
    y = load_labels(args.labels) if args.labels else None
    if y is not None and y.shape[0] != X.shape[0]:
        raise ConfigError(f"{args.features} has {X.shape[0]} rows but {args.labels} has {y.shape[0]} labels")
    aux = load_features(args.target_features) if args.target_features else None
    rec = estimate(cfg, Dataset(X, y), aux, candidate=Path(args.features).stem)
    out = rec.to_dict()
    out["warnings"] = list(rec.warnings)
    print(json.dumps(out))
    return 0


def _cmd_bench(args) -> int:
    from .harness import BenchmarkConfig, run_benchmark, write_report

    cfg = BenchmarkConfig.load(args.config)
    doc = run_benchmark(cfg, workers=args.workers, write=False)
    out = Path(args.out) if args.out else cfg.output
    if out is None:
        print(json.dumps(doc, indent=2))
    else:
        write_report(doc, out)
        print(json.dumps({"report": str(out), "cells": len(doc["cells"]), "skipped": len(doc["skipped"])}))
    return 0


def _cmd_report(args) -> int:
    from .harness import render_markdown

    path = Path(args.input)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such report") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if "cells" not in doc or "aggregates" not in doc:
        raise ConfigError(f"{path}: not a benchmark report")
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        sys.stdout.write(render_markdown(doc))
    return 0


def _cmd_synth(args) -> int:
    from .synthgen import SyntheticSpec, generate_family, write_family

    path = Path(args.spec)
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such spec file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    family = generate_family(SyntheticSpec.from_dict(payload))
    config = write_family(family, args.out)
    print(json.dumps({"config": str(config), "oracle": family.oracle}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="transferability", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="score one feature matrix with one method")
    p.add_argument("--method", required=True)
    p.add_argument("--features", required=True, help="FMAT or CSV feature file")
    p.add_argument("--labels", help="one integer class id per line")
    p.add_argument("--target-features", help="target-model features (dse, rsa)")
    p.add_argument("--dim", type=int, help="PCA dimension (clamped to the data)")
    p.add_argument("--affinity", choices=["euclidean", "cosine", "correlation"])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--sigma0-sq", dest="sigma0_sq", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--shrink", type=float)
    p.add_argument("--cv-folds", dest="cv_folds", type=int)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="report path (overrides the config's output)")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="re-render a benchmark report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["json", "markdown"], default="markdown")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic candidate family")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _emit_error("UsageError", str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except TransferabilityError as exc:
        return _emit_error(type(exc).__name__, str(exc))
    except OSError as exc:
        return _emit_error("IOError", str(exc))
