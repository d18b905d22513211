"""Command-line entry point: ``r2i train|eval|sweep|env-spec``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .envs import dump_spec
from .orchestrator import Trainer, evaluate, load_checkpoint, load_config, load_grid, run_sweep


def _train(args) -> int:
    overrides = dict(seed=args.seed, env=args.env, policy_input=args.policy_input, preset=args.preset,
                     out_dir=args.out_dir, total_env_steps=args.steps)
    if args.resume and args.config is None:
        # without a config file, continue from the checkpoint's own settings
        _, meta = load_checkpoint(args.resume)
        base = {k: v for k, v in meta["config"].items() if overrides.get(k) is None}
        overrides = {k: v for k, v in overrides.items() if v is not None}
        cfg = load_config(None, **base, **overrides)
    else:
        cfg = load_config(args.config, **overrides)
    trainer = Trainer.resume(args.resume, cfg) if args.resume else Trainer(cfg)
    final = trainer.run()
    print(json.dumps(final, sort_keys=True, default=float))
    return 0


def _eval(args) -> int:
    res = evaluate(args.checkpoint, args.env, args.episodes, args.seed)
    print(json.dumps({"mean_return": res.mean_return, "success": res.success, "episodes": len(res.returns)}))
    return 0


def _sweep(args) -> int:
    path = run_sweep(load_grid(args.grid))
    print(path)
    return 0


def _env_spec(args) -> int:
    print(dump_spec(args.env_id))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="r2i")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent")
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--env")
    p.add_argument("--policy-input", choices=["output", "hidden", "full"])
    p.add_argument("--preset", choices=["small_memory", "small", "medium_memory", "tiny"])
    p.add_argument("--out-dir")
    p.add_argument("--steps", type=int, help="total env steps")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--env", help="defaults to the env the checkpoint was trained on")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_eval)

    p = sub.add_parser("sweep", help="run a parameter x seed grid")
    p.add_argument("--grid", required=True)
    p.set_defaults(func=_sweep)

    p = sub.add_parser("env-spec", help="print an environment's declared spec as JSON")
    p.add_argument("env_id")
    p.set_defaults(func=_env_spec)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"r2i: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
