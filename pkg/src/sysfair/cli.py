"""Command-line entry point.

    sysfair generate --config world.cfg --out DIR
    sysfair run      --config exp.cfg   --out DIR
    sysfair diagnose --config exp.cfg   --alpha 0.5,0.5 --out DIR
    sysfair report   --log DIR          --out DIR

``--seed`` and ``--threads`` may appear before or after the subcommand.
For ``run`` the seed replaces ``master_seed``; for ``generate`` and
``diagnose`` it replaces the world ``seed``.
"""
import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import configio
from .errors import ConfigError, IngestionError, PipelineError
from .experiment import (config_from_kv, diagnose, load_config, read_trials, report, run_experiment,
                         write_diagnostics, write_report, write_trials)
from .worldgen import export_score_table


def _u64(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=_u64, default=default, help="override the seed (u64)")
    parser.add_argument("--threads", type=_positive, default=argparse.SUPPRESS if suppress else 1,
                        help="worker processes for independent trials")


def build_parser():
    parser = argparse.ArgumentParser(prog="sysfair", description="Fairness testbed for two-stage recommenders")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="generate a world and export its score table")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", parents=[common], help="run the weight-search experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("diagnose", parents=[common], help="gap decomposition and bounds at one alpha")
    p.add_argument("--config", required=True)
    p.add_argument("--alpha", required=True, help="comma-separated serving weights")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", parents=[common], help="rebuild the report from a trials.csv")
    p.add_argument("--log", required=True, help="directory containing trials.csv (or the file itself)")
    p.add_argument("--out", required=True)
    return parser


def _with_world_seed(config, seed):
    return config if seed is None else replace(config, world=replace(config.world, seed=seed))


def cmd_generate(args):
    path = Path(args.config)
    config = config_from_kv(configio.read_kv(path), base_dir=path.parent)
    config = _with_world_seed(config, args.seed)
    config.world.validate()
    world = config.load_world()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_score_table(world, out / "world.csv")
    print(f"wrote {out / 'world.csv'} and {out / 'world.cfg'}")


def cmd_run(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if not config.world_path:
        config.world.validate()
    log = run_experiment(config, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trials(log, out / "trials.csv")
    write_report(report(log), out)
    print(f"wrote {len(log.records)} records to {out / 'trials.csv'}")


def cmd_diagnose(args):
    config = _with_world_seed(load_config(args.config), args.seed)
    if not config.world_path:
        config.world.validate()
    alpha = configio.parse_vector("alpha", args.alpha)
    world = config.load_world()
    config.policy.check(world)
    write_diagnostics(diagnose(world, config.policy, alpha), args.out)
    print(f"wrote {Path(args.out) / 'diagnostics.json'}")


def cmd_report(args):
    log_path = Path(args.log)
    if log_path.is_dir():
        log_path = log_path / "trials.csv"
    write_report(report(read_trials(log_path)), args.out)
    print(f"wrote report to {args.out}")


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "diagnose": cmd_diagnose, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, IngestionError, PipelineError, ValueError, OSError) as e:
        print(f"sysfair {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
