"""Argument parsing and exit-code mapping."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..imaging.io import ImageFormatError
from ..numerics.checkpoint import CheckpointError
from ..numerics.tensor import ContractError
from ..restoration.train import TrainingError
from . import commands
from .config import U64, ConfigError, load_config, parse_scales

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_DEPENDENCY = 4
EXIT_TRAINING = 5


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= U64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand from resetting a flag given before it
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="INI run configuration")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="override [run] seed")
    common.add_argument("--jobs", type=_positive, default=argparse.SUPPRESS,
                        help="worker cap; never changes outputs")

    p = argparse.ArgumentParser(prog="blindrestore", parents=[common],
                                description="Two-stage blind image restoration at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic HQ dataset")
    s.add_argument("--count", type=int, help="override [synth] count")
    s.add_argument("--out", type=Path)

    d = sub.add_parser("degrade", parents=[common], help="degrade every image in a directory")
    d.add_argument("--input", type=Path, help="defaults to [paths] dataset")
    d.add_argument("--out", type=Path)
    d.add_argument("--wide", action="store_true", help="use the wide degradation ranges")

    t = sub.add_parser("train", parents=[common], help="train one stage")
    t.add_argument("--stage", required=True, choices=commands.STAGES)
    t.add_argument("--iterations", type=int, help="override the stage's iteration count")
    t.add_argument("--stop-after", type=_positive, help="stop after this many iterations (resumable)")

    r = sub.add_parser("restore", parents=[common], help="restore one LQ image")
    r.add_argument("input", type=Path)
    r.add_argument("--scale", type=float, help="gradient scale s (default 0)")
    r.add_argument("--out", type=Path)

    w = sub.add_parser("sweep", parents=[common], help="gradient-scale sweep on one LQ image")
    w.add_argument("input", type=Path)
    w.add_argument("--scales", help="comma-separated list, e.g. 0,50,200")
    w.add_argument("--hq", type=Path, help="ground truth for the psnr_vs_hq column")
    w.add_argument("--seeds", action="store_true", help="average over [guidance] sweep_seeds seeds")
    w.add_argument("--out", type=Path)
    return p


def resolve_config(args) -> "commands.RunConfig":
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "jobs", None) is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if getattr(args, "count", None) is not None:
        cfg = replace(cfg, synth=replace(cfg.synth, count=args.count))
    if getattr(args, "wide", False):
        cfg = replace(cfg, wide_range=True)
    if getattr(args, "iterations", None) is not None:
        n = args.iterations
        if args.stage == "restore":
            cfg = replace(cfg, restoration=replace(cfg.restoration, iterations=n))
        elif args.stage == "diffuse-pretrain":
            cfg = replace(cfg, diffusion=replace(cfg.diffusion, pretrain_iterations=n))
        else:
            cfg = replace(cfg, diffusion=replace(cfg.diffusion, finetune_iterations=n))
    return cfg.validate()


def dispatch(args) -> None:
    cfg = resolve_config(args)
    if args.command == "synth":
        commands.cmd_synth(cfg, args.out)
    elif args.command == "degrade":
        commands.cmd_degrade(cfg, args.input, args.out)
    elif args.command == "train":
        commands.cmd_train(cfg, args.stage, args.stop_after)
    elif args.command == "restore":
        commands.cmd_restore(cfg, args.input, args.scale, args.out)
    elif args.command == "sweep":
        scales = parse_scales(args.scales) if args.scales is not None else None
        commands.cmd_sweep(cfg, args.input, scales, args.hq, args.out, args.seeds)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        dispatch(args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except commands.DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (OSError, ImageFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
