"""Command-line interface: run experiments, re-evaluate checkpoints, and
export figure data as CSV."""
from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .agents import read_checkpoint


def _base_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig()
    if args.config:
        cfg = harness.load_config(args.config)
    overrides = {}
    if getattr(args, "algo", None) is not None:
        overrides["algo"] = args.algo
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        overrides["total_steps"] = args.steps
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = harness.ExperimentConfig(**{**cfg.__dict__, **overrides})
    return cfg


def cmd_run(args) -> int:
    cfg = _base_config(args)
    paths = harness.run(cfg)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _base_config(args)
    profile = harness.evaluate_checkpoint(args.checkpoint, cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    out = os.path.join(cfg.out_dir, "error_profile.csv")
    profile.write_csv(out)
    print(f"error_profile: {out}")
    print(f"mean_abs_error: {profile.mean_abs_error:.6g}")
    print(f"max_abs_error: {profile.max_abs_error:.6g}")
    print(f"mean_w1_error: {profile.mean_w1_error:.6g}")
    return 0


def cmd_export(args) -> int:
    cfg = _base_config(args)
    table = read_checkpoint(args.checkpoint)
    lattice = cfg.make_lattice()
    os.makedirs(cfg.out_dir, exist_ok=True)
    bins = args.bins if args.bins is not None else cfg.heatmap_bins
    heat_path = os.path.join(cfg.out_dir, "heatmap.csv")
    scan_path = os.path.join(cfg.out_dir, "quantile_scan.csv")
    harness.write_heatmap_csv(harness.export_heatmap(table, lattice, bins), heat_path)
    harness.write_quantile_scan_csv(table, lattice, scan_path)
    print(f"heatmap: {heat_path}")
    print(f"quantile_scan: {scan_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctdrl",
        description="Continuous-time distributional RL on the 1-D particle task")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", help="output directory (overrides config)")

    p_run = sub.add_parser("run", parents=[common], help="train and export artifacts")
    p_run.add_argument("--algo", choices=harness.ALGOS)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--steps", type=int, help="total environment steps")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", parents=[common],
                            help="recompute diagnostics from a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_export = sub.add_parser("export", parents=[common],
                              help="export heatmap and quantile scan from a checkpoint")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--bins", type=int)
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
