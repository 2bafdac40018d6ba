"""Command line entry point: train / eval / sweep / verify."""

from __future__ import annotations

import argparse
import sys

from .config import load_config_file
from .errors import CheckpointError, ConfigError, ContractError, TrainingDivergedError


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aoi-uav",
                                description="UAV relay fleet simulator and DQN trainer")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a DQN per the config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    t.add_argument("--out", default=None, help="override run.out_dir")

    e = sub.add_parser("eval", help="paired DQN / random-walk evaluation")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--episodes", type=int, default=None,
                   help="override run.eval_episodes")
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out", default=None)

    s = sub.add_parser("sweep", help="train and evaluate along the config sweep axis")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--jobs", type=int, default=1)

    sub.add_parser("verify", help="run the self-verification checks")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "verify":
        from .verify import run_verification

        return run_verification()

    try:
        cfg = load_config_file(args.config)
        if cfg.run["mode"] != args.command:
            raise ConfigError(
                f"config {args.config} declares run.mode={cfg.run['mode']!r}; "
                f"invoked as {args.command!r}"
            )
        seed = getattr(args, "seed", None)
        seed = cfg.run["master_seed"] if seed is None else seed
        out_dir = args.out if args.out is not None else cfg.run["out_dir"]

        from . import experiments

        if args.command == "train":
            ckpt, record = experiments.train_run(cfg, seed, out_dir)
            print(f"checkpoint written to {ckpt}")
            print(f"episodes: {record.payload['episodes']}, "
                  f"env steps: {record.payload['env_steps']}")
            return 0
        if args.command == "eval":
            episodes = args.episodes if args.episodes is not None else cfg.run["eval_episodes"]
            res, record = experiments.eval_run(cfg, args.checkpoint, episodes, seed, out_dir)
            print(f"mean AoI: dqn={res.dqn.mean_aoi:.4f} rw={res.rw.mean_aoi:.4f} "
                  f"ratio={res.aoi_ratio:.3f}")
            print(f"curves written under {out_dir}")
            return 0
        if args.command == "sweep":
            rows = experiments.sweep_run(cfg, out_dir, jobs=args.jobs)
            print(f"{len(rows)} rows written to {out_dir}/sweep.csv")
            return 0
        raise AssertionError(args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, TrainingDivergedError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
