import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Any

from ._channels import ChannelFamily
from ._config import LOG_LEVELS, get_config, set_config
from ._errors import CovertSemError
from ._experiment import (
    ExperimentConfig,
    Strategy,
    load_experiment_config,
    load_record,
    run_experiment,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# subcommand -> stages handed to run_experiment
STAGE_COMMANDS = {
    "train-identity": ["identity"],
    "train-codec": ["codec"],
    "train-generator": ["generator"],
    "train-steg": ["steganography"],
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON experiment config.")
    parser.add_argument("--seed", type=int, default=None, help="Override the experiment seed.")
    parser.add_argument("--output-dir", type=Path, default=None, help="Run directory.")
    parser.add_argument(
        "--resume",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Reuse stage checkpoints found in the run directory.",
    )
    parser.add_argument(
        "--log-level", type=str.upper, choices=LOG_LEVELS, default=None, help="Logging level."
    )
    parser.add_argument("--quiet", action="store_true", help="Hide progress bars.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covertsem",
        description="Eavesdropping attacks and covert defences for semantic communication.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in STAGE_COMMANDS:
        _add_common(sub.add_parser(name, help=f"Run the {name.removeprefix('train-')} stage."))

    attack = sub.add_parser("attack", help="Run eavesdropping attacks over a channel grid.")
    _add_common(attack)
    attack.add_argument(
        "--strategy",
        action="append",
        choices=[s.value for s in Strategy],
        help="Attack strategy; repeat for several.",
    )
    attack.add_argument(
        "--family", action="append", choices=[f.value for f in ChannelFamily]
    )
    attack.add_argument("--snr", action="append", type=float, help="SNR in dB; repeatable.")
    attack.add_argument("--queries", "-M", type=int, default=None, help="Closed-box budget M.")
    attack.add_argument("--lr", type=float, default=None, help="Glass-box step size.")
    attack.add_argument("--iters", type=int, default=None, help="Glass-box iteration cap.")
    attack.add_argument("--eps", type=float, default=None, help="Residual stopping threshold.")
    attack.add_argument(
        "--defended", action="store_true", help="Also attack the steganographic link."
    )

    evaluate = sub.add_parser("evaluate", help="Run every stage and the full grid.")
    _add_common(evaluate)
    evaluate.add_argument("--no-report", action="store_true", help="Skip plots and tables.")

    report = sub.add_parser("report", help="Render plots and tables for a finished run.")
    report.add_argument("run_dir", type=Path, help="Directory holding record.json.")
    report.add_argument("--out", type=Path, default=None, help="Report directory.")
    report.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, default=None)
    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.output_dir is not None:
        cfg = dataclasses.replace(cfg, output_dir=str(args.output_dir))
    if args.command != "attack":
        return cfg

    attacks = cfg.attacks
    knobs = {
        "lr": args.lr,
        "max_iters": args.iters,
        "stop_eps": args.eps,
        "n_queries": args.queries,
    }
    overrides = {k: v for k, v in knobs.items() if v is not None}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    section: dict[str, Any] = {"config": dataclasses.replace(attacks.config, **overrides)}
    if args.strategy:
        section["strategies"] = tuple(Strategy(s) for s in args.strategy)
    if args.family:
        section["families"] = tuple(ChannelFamily(f) for f in args.family)
    if args.snr:
        section["snrs_db"] = tuple(args.snr)
    return dataclasses.replace(cfg, attacks=dataclasses.replace(attacks, **section))


def _configure_logging(level: str | None) -> None:
    if level is not None:
        set_config(log_level=level.upper())
    logging.basicConfig(
        level=getattr(logging, get_config().log_level, logging.INFO),
        format=LOG_FORMAT,
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)

    try:
        if args.command == "report":
            from ._report import emit_report

            record = load_record(args.run_dir / "record.json")
            for path in emit_report(record, args.out):
                print(path)
            return 0

        if args.quiet:
            set_config(verbose=False)
        cfg = _experiment_config(args)
        if args.command in STAGE_COMMANDS:
            stages = STAGE_COMMANDS[args.command]
        elif args.command == "attack":
            stages = ["attacks", "defense"] if args.defended else ["attacks"]
        else:
            stages = None
        record = run_experiment(cfg, stages=stages, resume=args.resume)
        if args.command == "evaluate" and not args.no_report:
            from ._report import emit_report

            emit_report(record)
        print(Path(record.output_dir) / "record.json")
    except (CovertSemError, FileNotFoundError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
