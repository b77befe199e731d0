"""Command-line interface: train, evaluate, compare, tune."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .config import ConfigError, TuneSpec, load_run_config


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="config file (key = value sections)")
    parser.add_argument("--env", metavar="ID", help="environment id")
    parser.add_argument("--algo", choices=["ppo", "poem"], help="algorithm")
    parser.add_argument("--seed", type=int, metavar="N", help="run seed")
    parser.add_argument("--timesteps", type=int, metavar="N", help="total training timesteps")
    parser.add_argument("--out", metavar="DIR", help="output directory")


def _flag_overrides(args: argparse.Namespace) -> dict[tuple[str, str], str]:
    overrides: dict[tuple[str, str], str] = {}
    if args.env is not None:
        overrides[("run", "env")] = args.env
    if args.algo is not None:
        overrides[("run", "algo")] = args.algo
    if args.seed is not None:
        overrides[("run", "seed")] = str(args.seed)
    if args.timesteps is not None:
        overrides[("run", "total_timesteps")] = str(args.timesteps)
    if args.out is not None:
        overrides[("run", "out_dir")] = args.out
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poemrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one seeded run")
    _add_config_flags(p_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint over fixed-seed episodes")
    p_eval.add_argument("checkpoint", help="checkpoint file")
    p_eval.add_argument("--env", metavar="ID", help="env id (defaults to the checkpoint's)")
    p_eval.add_argument("--episodes", type=int, default=15, metavar="N")
    p_eval.add_argument("--seed", type=int, default=10_000, metavar="N", help="evaluation seed base")
    p_eval.add_argument("--out", metavar="DIR", help="where to write episodes.csv / steps.csv")
    p_eval.add_argument("--stochastic", action="store_true", help="sample instead of playing the mode")

    p_cmp = sub.add_parser("compare", help="Welch-test two run-set directories (baseline first)")
    p_cmp.add_argument("baseline_dir", help="directory of baseline (ppo) runs")
    p_cmp.add_argument("variant_dir", help="directory of variant (poem) runs")
    p_cmp.add_argument("--alpha", type=float, default=0.05, metavar="F")
    p_cmp.add_argument("--out", metavar="FILE", help="also write the table as CSV")

    p_tune = sub.add_parser("tune", help="bounded random search around the config's values")
    _add_config_flags(p_tune)
    p_tune.add_argument("--trials", type=int, default=20, metavar="N")
    p_tune.add_argument("--bound", type=float, default=0.10, metavar="F",
                        help="relative deviation per hyperparameter")
    p_tune.add_argument("--trial-timesteps", type=int, metavar="N",
                        help="timesteps per trial (default: 50k mountain car, 100k otherwise)")
    p_tune.add_argument("--episodes", type=int, default=4, metavar="N",
                        help="evaluation episodes per trial")
    p_tune.add_argument("--tune-seed", type=int, default=0, metavar="N",
                        help="master seed for the trial sampler")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            config = load_run_config(args.config, _flag_overrides(args))
            result = harness.train(config)
            print(f"trained {config.algo} on {config.env_id} for {config.total_timesteps} steps")
            print(f"checkpoint: {result.checkpoint_path}")
            print(f"metrics:    {result.metrics_path}")
        elif args.command == "evaluate":
            report = harness.evaluate(
                args.checkpoint,
                env_id=args.env,
                n_episodes=args.episodes,
                seed_base=args.seed,
                deterministic=not args.stochastic,
                out_dir=args.out,
            )
            print(f"episodes: {len(report.per_episode_rewards)}  "
                  f"mean reward: {report.mean:.2f}  std: {report.std:.2f}")
        elif args.command == "compare":
            rows = harness.compare(args.baseline_dir, args.variant_dir, args.alpha, args.out)
            print(harness.format_comparison(rows))
        elif args.command == "tune":
            config = load_run_config(args.config, _flag_overrides(args))
            trial_steps = args.trial_timesteps
            if trial_steps is None:
                trial_steps = 50_000 if config.env_id == "mountain_car_continuous" else 100_000
            spec = TuneSpec(
                n_trials=args.trials,
                bound=args.bound,
                trial_timesteps=trial_steps,
                eval_episodes=args.episodes,
                seed=args.tune_seed,
            )
            out_dir = args.out or "tune_out"
            result = harness.tune(spec, config, out_dir)
            print(f"best trial: {result.best_trial}  score: {result.best_score:.2f}")
            print(f"best config: {out_dir}/best_config.ini")
            print(f"trials log:  {result.trials_path}")
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
