"""Command-line surface: scoring runs, evaluation, sweeps, and zoo generation.

Exit codes: 0 success, 2 usage error, 3 data/validation error, 4 internal
numerical error. Output files are written atomically (write-temp-rename) and
rerunning a command overwrites them byte-identically apart from timing
fields. The PCMSEL_THREADS environment variable caps scoring parallelism
(0 = auto).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .engine import (
    ALL_METHODS,
    RUN_SCHEMA_VERSION,
    run_from_dict,
    run_to_dict,
    score_zoo,
)
from .errors import EXIT_OK, EXIT_USAGE, PcmselError, ValidationError
from .metrics import evaluate_selection, evaluation_to_dict, format_evaluation_table
from .synth import ZooSpec, generate_zoo
from .zoo import load_manifest, load_truth

DEFAULT_PROBE_SIZE = 1000
DEFAULT_REPEATS = 5
DEFAULT_SEED = 42
DEFAULT_K = "1,5,10"


class _UsageError(Exception):
    pass


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_json(path, doc: dict) -> None:
    _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _parse_csv_ints(text: str, what: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise _UsageError(f"{what} must be a comma-separated list of integers, got {text!r}") from None
    if not values:
        raise _UsageError(f"{what} is empty")
    return values


def _parse_methods(text: str) -> list[str]:
    methods = [part.strip() for part in text.split(",") if part.strip() != ""]
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise _UsageError(
            f"unknown method id(s) {', '.join(unknown)}; valid ids: {', '.join(ALL_METHODS)}"
        )
    if not methods:
        raise _UsageError("method list is empty")
    return methods


def _threads_from_env() -> int:
    raw = os.environ.get("PCMSEL_THREADS", "0")
    try:
        threads = int(raw)
    except ValueError:
        raise _UsageError(f"PCMSEL_THREADS must be an integer, got {raw!r}") from None
    if threads < 0:
        raise _UsageError(f"PCMSEL_THREADS must be >= 0 (0 = auto), got {threads}")
    return threads


def _load_run_report(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read run report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"run report {path} is not valid JSON: {exc}") from exc
    return run_from_dict(doc)


def cmd_score(args) -> int:
    manifest = load_manifest(args.manifest)
    methods = _parse_methods(args.methods)
    run = score_zoo(
        manifest,
        methods,
        probe_size=args.probe_size,
        repeats=args.repeats,
        seed=args.seed,
        base_dir=Path(args.manifest).parent,
        threads=_threads_from_env(),
    )
    doc = run_to_dict(run)
    doc["config"]["manifest"] = str(args.manifest)
    _write_json(args.out, doc)
    print(f"scored {len(manifest.models)} models with {len(methods)} methods -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run = _load_run_report(args.run)
    truth = load_truth(args.truth)
    k_values = _parse_csv_ints(args.k, "--k")
    results = evaluate_selection(run, truth, k_values)
    doc = evaluation_to_dict(results, run.task_id)
    doc["config"] = {"run": str(args.run), "truth": str(args.truth), "k": k_values}
    if args.format == "table":
        text = format_evaluation_table(results)
        if args.out:
            _atomic_write_text(args.out, text)
        else:
            print(text, end="")
    else:
        if args.out:
            _write_json(args.out, doc)
        else:
            print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_sweep_budget(args) -> int:
    manifest = load_manifest(args.manifest)
    truth = load_truth(args.truth)
    methods = _parse_methods(args.methods)
    probe_sizes = _parse_csv_ints(args.probe_sizes, "--probe-sizes")
    threads = _threads_from_env()
    grid: dict[str, dict[str, dict[str, float]]] = {m: {} for m in methods}
    for size in probe_sizes:
        run = score_zoo(
            manifest,
            methods,
            probe_size=size,
            repeats=args.repeats,
            seed=args.seed,
            base_dir=Path(args.manifest).parent,
            threads=threads,
        )
        results = evaluate_selection(run, truth, [5])
        for method in methods:
            grid[method][str(size)] = {
                "ndcg@5": results[method].ndcg_at[5],
                "rel@5": results[method].rel_at[5],
                "seconds": run.timings[method],
            }
    doc = {
        "schema_version": RUN_SCHEMA_VERSION,
        "task_id": manifest.task_id,
        "config": {
            "manifest": str(args.manifest),
            "truth": str(args.truth),
            "methods": methods,
            "probe_sizes": probe_sizes,
            "repeats": args.repeats,
            "seed": args.seed,
        },
        "grid": grid,
    }
    if args.format == "table":
        lines = [f"{'method':<12}" + "".join(f"{size:>12}" for size in probe_sizes)]
        for metric in ("ndcg@5", "rel@5", "seconds"):
            lines.append(metric)
            for method in methods:
                cells = [f"{grid[method][str(size)][metric]:.4f}" for size in probe_sizes]
                lines.append(f"  {method:<10}" + "".join(f"{c:>12}" for c in cells))
        text = "\n".join(lines) + "\n"
        if args.out:
            _atomic_write_text(args.out, text)
        else:
            print(text, end="")
    else:
        _write_json(args.out, doc)
        print(f"budget sweep over probe sizes {probe_sizes} -> {args.out}")
    return EXIT_OK


def cmd_sweep_zoo(args) -> int:
    manifest = load_manifest(args.manifest)
    truth = load_truth(args.truth)
    methods = _parse_methods(args.methods)
    zoo_sizes = _parse_csv_ints(args.zoo_sizes, "--zoo-sizes")
    k_values = _parse_csv_ints(args.k, "--k")
    for size in zoo_sizes:
        if size > len(manifest.models):
            raise ValidationError(
                f"zoo size {size} exceeds the manifest ({len(manifest.models)} models)"
            )
    threads = _threads_from_env()
    blocks: dict[str, dict] = {}
    tables: list[str] = []
    for size in zoo_sizes:
        prefix = manifest.prefix(size)
        run = score_zoo(
            prefix,
            methods,
            probe_size=args.probe_size,
            repeats=args.repeats,
            seed=args.seed,
            base_dir=Path(args.manifest).parent,
            threads=threads,
        )
        results = evaluate_selection(run, truth, k_values)
        blocks[str(size)] = evaluation_to_dict(results, prefix.task_id)
        tables.append(f"number of models = {size}\n" + format_evaluation_table(results))
    doc = {
        "schema_version": RUN_SCHEMA_VERSION,
        "task_id": manifest.task_id,
        "config": {
            "manifest": str(args.manifest),
            "truth": str(args.truth),
            "methods": methods,
            "zoo_sizes": zoo_sizes,
            "probe_size": args.probe_size,
            "repeats": args.repeats,
            "seed": args.seed,
            "k": k_values,
        },
        "blocks": blocks,
    }
    if args.format == "table":
        text = "\n".join(tables)
        if args.out:
            _atomic_write_text(args.out, text)
        else:
            print(text, end="")
    else:
        _write_json(args.out, doc)
        print(f"zoo sweep over sizes {zoo_sizes} -> {args.out}")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    try:
        lo, hi = (float(p) for p in args.quality_range.split(","))
    except ValueError:
        raise _UsageError(
            f"--quality-range must be two comma-separated numbers, got {args.quality_range!r}"
        ) from None
    spec = ZooSpec(
        model_count=args.models,
        sample_count=args.samples,
        class_count=args.classes,
        feature_dim=args.dim,
        quality_range=(lo, hi),
        noise_sigma=args.noise,
        seed=args.seed,
        metadata_mode=args.metadata_mode,
    )
    generated = generate_zoo(spec, args.out_dir)
    print(
        f"generated {spec.model_count} models (n={spec.sample_count}, C={spec.class_count}, "
        f"d={spec.feature_dim}) -> {args.out_dir}/manifest.json, {args.out_dir}/truth.json"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcmsel",
        description="Rank a zoo of pre-trained models for a target task from probe features alone.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score every manifest model with the requested methods")
    p.add_argument("--manifest", required=True)
    p.add_argument("--methods", default=",".join(ALL_METHODS), help=f"CSV of: {', '.join(ALL_METHODS)}")
    p.add_argument("--probe-size", type=int, default=DEFAULT_PROBE_SIZE)
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="NDCG@k / Rel@k of a run report against a truth table")
    p.add_argument("--run", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k", default=DEFAULT_K)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-budget", help="score + evaluate across probe sizes (NDCG@5/Rel@5 grid)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--probe-sizes", required=True)
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.set_defaults(func=cmd_sweep_budget)

    p = sub.add_parser("sweep-zoo", help="score + evaluate manifest prefixes of the given sizes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--zoo-sizes", required=True)
    p.add_argument("--probe-size", type=int, default=DEFAULT_PROBE_SIZE)
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--k", default=DEFAULT_K)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.set_defaults(func=cmd_sweep_zoo)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic zoo with known ground truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--models", type=int, default=30)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--quality-range", default="0.1,0.9")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--metadata-mode", choices=("correlated", "decorrelated"), default="correlated")
    p.set_defaults(func=cmd_gen_synthetic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PcmselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
