"""Command-line front end for feature extraction."""

from __future__ import annotations

import argparse
import sys

from .extraction import POOLING_MODES, BridgeError, ExtractionConfig, extract_features


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcmbridge",
        description="Extract probe features from a pre-trained model into an FMX file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="run snippets through a model and write features")
    p.add_argument("--model", required=True, help="hub identifier or local model directory")
    p.add_argument("--snippets", required=True, help="JSON-lines file of {id, code}")
    p.add_argument("--labels", required=True, help="JSON-lines file of {id, label}")
    p.add_argument("--out", required=True, help="output FMX path")
    p.add_argument("--pooling", choices=POOLING_MODES, default="mean")
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    config = ExtractionConfig(
        model_ref=args.model,
        snippets_file=args.snippets,
        label_file=args.labels,
        pooling=args.pooling,
        max_tokens=args.max_tokens,
        batch_size=args.batch_size,
        device=args.device,
    )
    try:
        summary = extract_features(config, args.out)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(
        f"{summary.model_id}: {summary.n_samples} samples x {summary.feature_dim} dims "
        f"({summary.param_count} params, {summary.truncated} truncated) -> {summary.feature_path}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
