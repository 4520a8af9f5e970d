import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

# Add project root to path to allow imports from lib
sys.path.insert(0, str(Path(__file__).parent.parent))

from vpo_cli import commands  # noqa: E402
from vpo_cli.commands import CommandError  # noqa: E402
from vpo_cli.config import ConfigManager, RunConfig, get_config_manager  # noqa: E402
from vpo_cli.helpers import (  # noqa: E402
    CommandSummary,
    ErrorReport,
    dumps_json,
    parse_assignments,
    parse_floats,
    parse_range,
)
from vpo_cli.settings import settings  # noqa: E402

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
SUBCOMMANDS = ["matrices", "acpf", "solve", "schedule", "sweep", "verify", "scale"]

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command and shared run flags."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--feeder", type=str, required=True, help="Feeder alias or JSON document."
    )
    common.add_argument("--profile", type=str, help="Load profile CSV.")
    common.add_argument("--period", type=int, help="Profile row to solve (0-based).")
    common.add_argument("--epsilon", type=float, help="Convergence threshold.")
    common.add_argument("--gap", type=float, help="Relative MIP gap limit.")
    common.add_argument(
        "--segments", type=int, help="Secant segments of the q² objective terms."
    )
    common.add_argument(
        "--quad-mode",
        dest="quad_mode",
        choices=["const", "pwl"],
        help="Quadratic term of the current bound.",
    )
    common.add_argument(
        "--envelope-segments",
        dest="envelope_segments",
        type=int,
        help="Secant segments per direction in pwl mode.",
    )
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument(
        "--out",
        type=str,
        default=settings.output_dir,
        help="Output directory (default: VPO_OUTPUT_DIR or ./results).",
    )
    common.add_argument("--seed", type=int, help="Seed for Monte-Carlo sampling.")
    common.add_argument(
        "--no-caps", dest="no_caps", action="store_true", help="Remove all cap banks."
    )
    common.add_argument(
        "--log-level",
        type=str,
        choices=LOG_LEVELS,
        help="Set the logging level (default: VPO_LOG or INFO).",
    )
    common.add_argument("--config", type=str, help="Configuration file.")

    parser = argparse.ArgumentParser(
        prog="vpo",
        description="Volt/VAr positioning with tap changers, cap banks and DERs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("matrices", parents=[common], help="Export DistFlow operators.")

    acpf = sub.add_parser("acpf", parents=[common], help="Exact load flow.")
    acpf.add_argument("--taps", type=str, help="branch=tap,... (original ids)")
    acpf.add_argument("--caps", type=str, help="node=units,... (original ids)")
    acpf.add_argument("--qg", type=str, help="node=q_pu,... (original ids)")

    solve = sub.add_parser("solve", parents=[common], help="Run one period.")
    solve.add_argument(
        "--dump-lp", dest="dump_lp", action="store_true", help="Write p3_iter<k>.lp."
    )
    solve.set_defaults(needs_profile=True)

    schedule = sub.add_parser("schedule", parents=[common], help="Run every period.")
    schedule.add_argument(
        "--compare-caps",
        dest="compare_caps",
        action="store_true",
        help="Also solve every period without cap banks.",
    )
    schedule.add_argument("--workers", type=int, help="Thread pool size.")
    schedule.set_defaults(needs_profile=True)

    sweep = sub.add_parser("sweep", parents=[common], help="Parameter sweeps.")
    sweep.add_argument("--alphas", type=str, help="Comma separated α values.")
    sweep.add_argument("--vlows", type=str, help="Comma separated lower bounds (pu).")
    sweep.add_argument("--workers", type=int, help="Thread pool size.")
    sweep.set_defaults(needs_profile=True)

    verify = sub.add_parser("verify", parents=[common], help="Envelope properties.")
    verify.add_argument("--samples", type=int, help="Monte-Carlo sample count.")
    verify.add_argument(
        "--tracking-node",
        dest="tracking_node",
        type=int,
        help="Node id for the ±1000 kVAr tracking sweep.",
    )

    scale = sub.add_parser("scale", parents=[common], help="Solve time per cap count.")
    scale.add_argument("--caps", type=str, help="Cap counts, e.g. 1..6 or 1,3,6.")
    scale.set_defaults(needs_profile=True)
    return parser


def configure_logging(level: Optional[str]) -> None:
    name = (level or settings.log_level or "INFO").upper()
    if name not in LOG_LEVELS:
        name = "INFO"
    # stdout carries the JSON summary
    logging.basicConfig(
        level=getattr(logging, name),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def dispatch(
    args: argparse.Namespace, config: RunConfig, manager: ConfigManager
) -> CommandSummary:
    """Call the command function for ``args.command``."""
    experiments = manager.experiments
    if args.command == "matrices":
        return commands.run_matrices(config)
    if args.command == "acpf":
        try:
            taps = parse_assignments(args.taps, "tap")
            caps = parse_assignments(args.caps, "cap")
            q_g = parse_assignments(args.qg, "DER")
        except ValueError as e:
            raise CommandError(str(e)) from None
        return commands.run_acpf(config, taps=taps, caps=caps, q_g=q_g)
    if args.command == "solve":
        return commands.run_solve(config)
    if args.command == "schedule":
        return commands.run_schedule(config, args.compare_caps, args.workers)
    if args.command == "sweep":
        try:
            alphas = parse_floats(args.alphas) if args.alphas else None
            v_lows = parse_floats(args.vlows) if args.vlows else None
        except ValueError as e:
            raise CommandError(f"Malformed sweep values: {e}") from None
        if alphas is None and v_lows is None:
            alphas = list(experiments.alphas)
        return commands.run_sweep(config, alphas, v_lows, args.workers)
    if args.command == "verify":
        node = args.tracking_node
        if node is None:
            node = experiments.tracking_node
        return commands.run_verify(config, node)
    if args.command == "scale":
        try:
            counts = (
                parse_range(args.caps) if args.caps else list(experiments.scale_caps)
            )
        except ValueError as e:
            raise CommandError(f"Malformed cap counts: {e}") from None
        return commands.run_scale(config, counts)
    raise CommandError(f"Unknown subcommand '{args.command}'")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the vpo command.

    Returns:
        0 on success, 1 when a command fails, 2 on invalid flags.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level)
    manager = get_config_manager(args.config)

    try:
        config = RunConfig.from_args(args, manager)
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid arguments: {e}")
        print(dumps_json(ErrorReport(error=type(e).__name__, message=str(e)).model_dump()))
        return 2

    try:
        summary = dispatch(args, config, manager)
    except CommandError as e:
        logger.error(f"{args.command}: {e}")
        print(dumps_json(ErrorReport(error=type(e).__name__, message=str(e)).model_dump()))
        return 2
    except Exception as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        print(dumps_json(ErrorReport(error=type(e).__name__, message=str(e)).model_dump()))
        return 1

    print(dumps_json(summary.model_dump()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
