"""Command-line entry points for training, evaluation, and dumps.

Exit codes: 0 ok, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (ConfigError, RunConfig, dump_embeddings, dump_graph,
                      evaluate_run, run)


def _parse_seeds(arg):
    try:
        return tuple(int(s) for s in arg.split(",") if s.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad --seeds value {arg!r}: {exc}") from exc


def build_parser():
    parser = argparse.ArgumentParser(
        prog="graphhrl",
        description="Hierarchical RL with graph-derived subgoal representations")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run the configured experiment sweep")
    train.add_argument("--config", required=True, help="run config JSON path")
    train.add_argument("--arm", help="restrict to a single ablation arm")
    train.add_argument("--seed", type=int, help="restrict to a single seed")
    train.add_argument("--seeds", help="comma-separated seed list override")
    train.add_argument("--out", help="output directory override")
    train.add_argument("--workers", type=int, default=1,
                       help="parallel seed workers (default 1)")

    ev = sub.add_parser("eval", help="greedy rollouts from saved learners")
    ev.add_argument("--run-dir", required=True)
    ev.add_argument("--episodes", type=int, default=20)

    dg = sub.add_parser("dump-graph", help="print a run's final state graph JSON")
    dg.add_argument("--run-dir", required=True)
    dg.add_argument("--out", help="write to this file instead of stdout")

    de = sub.add_parser("dump-embeddings", help="write a run's embedding CSV")
    de.add_argument("--run-dir", required=True)
    de.add_argument("--project", action="store_true",
                    help="append 2-D PCA coordinates")
    de.add_argument("--out", help="CSV output path override")
    return parser


def _cmd_train(args):
    overrides = {}
    if args.arm:
        overrides["arms"] = (args.arm,)
    if args.seed is not None and args.seeds:
        raise ConfigError("pass --seed or --seeds, not both")
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    elif args.seeds:
        overrides["seeds"] = _parse_seeds(args.seeds)
    if args.out:
        overrides["out_dir"] = args.out
    summary = run(RunConfig.load(args.config, **overrides), workers=args.workers)
    json.dump(summary, sys.stdout, indent=2)
    print()


def _cmd_eval(args):
    report = evaluate_run(args.run_dir, episodes=args.episodes)
    json.dump(report, sys.stdout, indent=2)
    print()


def _cmd_dump_graph(args):
    payload = dump_graph(args.run_dir)
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)


def _cmd_dump_embeddings(args):
    path = dump_embeddings(args.run_dir, project=args.project, out_path=args.out)
    print(path)


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "dump-graph": _cmd_dump_graph,
        "dump-embeddings": _cmd_dump_embeddings,
    }
    try:
        handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
