"""Command-line interface for graphon opinion dynamics experiments."""

import argparse
import logging
import os
import sys
from typing import List, Optional

from src.config import load_config, with_overrides
from src.models import ConfigError, Err, ErrorType
from src.orchestrator import run_bound_check, run_degrees, run_sweep, sample_graph, simulate, solve_reference

LOG_LEVEL_ENV = "GRAPHON_LOG_LEVEL"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_INTERRUPTED = 130


class UsageError(Exception):
    """Raised instead of exiting when argument parsing fails."""

    def __init__(self, usage: str, message: str):
        super().__init__(message)
        self.usage = usage


class ArgumentParser(argparse.ArgumentParser):
    """Parser reporting bad arguments as UsageError so main() controls the exit code."""

    def error(self, message: str):
        raise UsageError(self.format_usage(), message)


def _u64(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {value}")
    return seed


def _common_options() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help='Experiment config (YAML)')
    common.add_argument('--seed', type=_u64, help='Seed replacing the configured seed list')
    common.add_argument('--out', help='Output directory (default: output_dir from the config)')
    common.add_argument('--format', choices=('csv', 'json'), default='csv', help='Output format (default: csv)')
    common.add_argument(
        '--alpha-override',
        type=float,
        help='Replace alpha_n = 1/(n eps_n); every output file is marked with a warning line'
    )
    common.add_argument('--layout', choices=('long', 'wide'), default='wide', help='Trajectory CSV layout (default: wide)')
    common.add_argument('--n', type=int, help='Node count for single-run commands (default: first of n_list)')
    common.add_argument('-v', '--verbose', action='store_true', help='Log progress at INFO level')
    return common


def parse_arguments(args: List[str]) -> argparse.Namespace:
    """
    Parse command line arguments.

    Args:
        args: Raw command line arguments

    Returns:
        Parsed arguments object

    Raises:
        UsageError: On unknown commands or flags
    """
    parser = ArgumentParser(
        prog='graphon-opinions',
        description="Simulate opinion dynamics on signed graphs sampled from signed graphons",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s sample --config configs/block_sweep.yaml --seed 7
  %(prog)s simulate --config configs/block_sweep.yaml --seed 7 --n 100 --layout long
  %(prog)s simulate --config configs/block_sweep.yaml --graph results/adjacency_n100_seed7.csv
  %(prog)s sweep --config configs/block_sweep.yaml --out results/block
  %(prog)s bound-check --config configs/block_sweep.yaml --format json
        """
    )
    common = _common_options()
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True
    commands.add_parser('sample', parents=[common], help='Sample one signed graph and write its adjacency')
    simulate_parser = commands.add_parser('simulate', parents=[common], help='Integrate the dynamics on one sampled graph')
    simulate_parser.add_argument('--graph', help='Adjacency CSV written by sample, used instead of a fresh graph')
    simulate_parser.add_argument('--latents', help='Latent CSV for the stored graph (default: regenerated from its seed)')
    commands.add_parser('solve-graphon', parents=[common], help='Solve the graphon dynamics on the reference grid')
    commands.add_parser('sweep', parents=[common], help='Convergence sweep over n and seeds')
    commands.add_parser('bound-check', parents=[common], help='Check the error bound on every sweep run')
    commands.add_parser('degrees', parents=[common], help='Monte Carlo degree statistics')
    return parser.parse_args(args)


def configure_logging(verbose: bool) -> None:
    level = os.environ.get(LOG_LEVEL_ENV, "INFO" if verbose else "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format=LOG_FORMAT)


def _exit_code(error_type: ErrorType) -> int:
    return EXIT_NUMERIC if error_type is ErrorType.NUMERIC_ERROR else EXIT_CONFIG


def _report_error(error) -> int:
    print(f"\nError: {error.message}", file=sys.stderr)
    if error.details:
        print(f"Details: {error.details}", file=sys.stderr)
    return _exit_code(error.error_type)


def _print_files(files: List[str]) -> None:
    for path in files:
        print(f"  {path}")


def run_command(parsed: argparse.Namespace) -> int:
    """Dispatch a parsed command and map its result to an exit code."""
    cfg = with_overrides(
        load_config(parsed.config),
        seed=parsed.seed,
        output_dir=parsed.out,
        alpha_override=parsed.alpha_override
    )
    if parsed.alpha_override is not None:
        print(f"Warning: alpha overridden to {parsed.alpha_override:g}; outputs are marked accordingly", file=sys.stderr)

    command = parsed.command
    if command == 'sample':
        result = sample_graph(cfg, n=parsed.n, fmt=parsed.format)
    elif command == 'simulate':
        result = simulate(
            cfg, n=parsed.n, fmt=parsed.format, layout=parsed.layout,
            graph_path=parsed.graph, latents_path=parsed.latents
        )
    elif command == 'solve-graphon':
        result = solve_reference(cfg, fmt=parsed.format, layout=parsed.layout)
    elif command == 'sweep':
        result = run_sweep(cfg, fmt=parsed.format)
    elif command == 'bound-check':
        result = run_bound_check(cfg, fmt=parsed.format)
    else:
        result = run_degrees(cfg, fmt=parsed.format)

    if isinstance(result, Err):
        return _report_error(result.error)

    value = result.value
    if isinstance(value, list):
        print("Wrote:")
        _print_files(value)
        return EXIT_OK

    print(f"Config {value.config_hash}, wrote:")
    _print_files(value.files)

    if command == 'degrees':
        for n in cfg.n_list:
            print(f"n={n}: degree bound violated in {value.violation_rate(n):.1%} of trials, "
                  f"average degree check passed in {value.l1_pass_rate(n):.1%}")
        return EXIT_OK

    for model, medians in value.medians_by_n.items():
        trend = ", ".join(f"n={n}: {error:.3e}" for n, error in medians.items())
        print(f"{model} median sup error: {trend}")
    if value.failed:
        print(f"Warning: {len(value.failed)} run(s) failed; see the summary", file=sys.stderr)

    if command == 'bound-check':
        margin = value.global_min_margin()
        print(f"Minimum margin: {margin!r}, control margin: {value.control_margin!r}")
        print(f"RK4 vs Picard gap: {value.solver_gap!r}")
        if margin is not None and margin < 0:
            for finding in value.findings:
                print(f"Finding: {finding}", file=sys.stderr)
            return EXIT_NUMERIC
    return EXIT_OK


def main(args: Optional[List[str]] = None) -> int:
    """
    Main entry point for the CLI.

    Args:
        args: Command line arguments (defaults to sys.argv[1:])

    Returns:
        Exit code: 0 success, 1 usage or configuration error, 2 numeric failure
    """
    if args is None:
        args = sys.argv[1:]

    try:
        parsed = parse_arguments(args)
    except UsageError as e:
        print(e.usage, end="", file=sys.stderr)
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    configure_logging(parsed.verbose)

    try:
        return run_command(parsed)
    except ConfigError as e:
        print(f"\nError: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("\n\nOperation cancelled by user.", file=sys.stderr)
        return EXIT_INTERRUPTED
    except Exception as e:
        print(f"\nUnexpected error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
