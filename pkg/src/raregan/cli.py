"""Command-line entry point: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import PipelineConfig

STAGES = {
    "gen-data": pipeline.gen_data,
    "build-vocab": pipeline.build_vocab,
    "train-embedding": pipeline.train_embedding,
    "train-encoder": pipeline.train_encoder_stage,
    "encode-features": pipeline.encode_features,
    "train-gan": pipeline.train_gan_stage,
    "export-pr": pipeline.export_pr,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="raregan", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override [pipeline] seed")
    common.add_argument("--out", default="run", help="artifact directory (default: ./run)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common])
    b = sub.add_parser("train-baseline", parents=[common])
    b.add_argument("--variant", choices=("lr", "dnn"), required=True)
    sub.add_parser("evaluate", parents=[common])
    sub.add_parser("run-all", parents=[common])
    w = sub.add_parser("write-config", help="print the default config as INI")
    w.add_argument("--seed", type=int, default=0)
    return parser


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def print_results(results):
    for name in pipeline.MODELS:
        print(f"{name}\tPR-AUC {results[name]:.4f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "write-config":
            sys.stdout.write(PipelineConfig().with_seed(args.seed).to_ini())
            return 0
        ws = pipeline.Workspace(args.out, load_config(args))
        if args.command == "train-baseline":
            pipeline.train_baseline_stage(ws, args.variant)
        elif args.command == "evaluate":
            print_results(pipeline.evaluate(ws))
        elif args.command == "run-all":
            print_results(pipeline.run_all(ws))
        else:
            STAGES[args.command](ws)
    except (pipeline.PipelineError, ValueError, OSError, FloatingPointError) as exc:
        print(f"raregan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
