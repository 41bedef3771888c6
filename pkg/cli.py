#!/usr/bin/env python3
"""
Hilbert Consensus - Command Line Interface

Simulate and certify consensus in multi-agent systems x' = A(t, x) x from
TOML scenario files, run the cone-contraction verification suites, sweep a
scenario parameter and draw SVG figures of the results.

Usage:
    cli.py simulate --scenario scenarios/fig1.toml --out runs/
    cli.py certify --scenario scenarios/chain10.toml
    cli.py verify contraction --n 2..6 --samples 10000
    cli.py sweep --scenario scenarios/chain10.toml --param topology.delta --values 0.1 0.5 1.0
    cli.py plot states runs/chain10.csv

Exit codes: 0 all checks passed, 1 checks ran and failed, 2 configuration or
input error.
"""

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, List, Optional, Sequence

from hilbert_consensus import (
    ConsensusToolError,
    ParameterError,
    __version__,
    certify_consensus,
    certify_scenario,
    parse_scenario_file,
    read_signal_trace,
    read_trajectory_csv,
    simulate_scenario,
    sweep,
    two_cone_demo,
    verify_cone_diameter,
    verify_diameter_decay,
    verify_lemma_contraction,
    verify_sandwich,
    write_signal_trace,
    write_trajectory_csv,
)
from hilbert_consensus.analysis import sample_blend_matrix
from hilbert_consensus.formatters import (
    format_consensus_report,
    format_contraction_reports,
    format_diameter_reports,
    format_json,
    format_run_report,
    format_sandwich_reports,
    format_sweep_table,
    format_two_cone_report,
    report_document,
)
from hilbert_consensus.graph import WeightedDigraph
from hilbert_consensus.plotting import PLOT_KINDS, plot_metric, plot_signal, plot_states

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger("hilbert_consensus.cli")

OUT_ENV = "HILBERT_CONSENSUS_OUT"
EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2
SUITES = ("contraction", "diameter", "sandwich", "two_cone", "all")
CONTRACTION_DELTAS = (0.1, 0.3, 0.6, 1.0)
CONTRACTION_EPS_FRACTIONS = (0.2, 0.5, 0.8)
DIAMETER_GAMMAS = (0.1, 0.2)


def parse_sizes(text: str) -> List[int]:
    """
    Parse agent counts from the command line.

    Supports formats like:
    - "4"        -> [4]
    - "2..6"     -> [2, 3, 4, 5, 6]
    - "2,3,8"    -> [2, 3, 8]

    Raises:
        ValueError: If the text is not a count, range or list, or a count is below 2
    """
    try:
        if ".." in text:
            low, high = (int(part) for part in text.split("..", 1))
            sizes = list(range(low, high + 1))
        else:
            sizes = [int(part) for part in text.split(",")]
    except ValueError:
        raise ValueError(f"Invalid agent count format: {text}")
    if not sizes or min(sizes) < 2:
        raise ValueError(f"agent counts must be >= 2, got {text}")
    return sizes


def parse_value(text: str) -> Any:
    """A sweep value read as a TOML value (number, boolean, array), else kept as a string."""
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def output_dir(flag: Optional[str], configured: Optional[str] = None) -> Path:
    """--out, then the scenario's outputs.dir, then $HILBERT_CONSENSUS_OUT, then the working directory."""
    directory = Path(flag or configured or os.environ.get(OUT_ENV) or ".")
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _load_scenario(args):
    overrides = {"seed": args.seed} if args.seed is not None else None
    return parse_scenario_file(args.scenario, overrides)


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args)
    result = simulate_scenario(scenario)
    out = output_dir(args.out, scenario.outputs.directory)
    csv_path = write_trajectory_csv(result.trajectory, out / scenario.outputs.csv, result.metadata.scenario_hash)
    written = [csv_path]
    if result.signal is not None and all(isinstance(g, WeightedDigraph) for g in result.signal.graphs()):
        written.append(write_signal_trace(result.signal, out / scenario.outputs.trace, result.metadata.scenario_hash))
    meta_path = out / f"{scenario.name}.meta.json"
    meta_path.write_text(format_json(result.metadata.to_dict()), encoding="utf-8")
    written.append(meta_path)

    traj = result.trajectory
    print(f"Simulated {scenario.name} ({scenario.model.kind.value}, n={traj.n}) "
          f"over [{scenario.t0:g}, {scenario.t_end:g}]: {len(traj) - 1} steps")
    print(f"Spread {traj.spread[0]:.6e} -> {traj.spread[-1]:.6e}")
    for path in written:
        print(f"Wrote {path}")
    return EXIT_OK


def cmd_certify(args) -> int:
    if args.scenario is None and args.trajectory is None:
        print("Error: certify needs --scenario or --trajectory", file=sys.stderr)
        return EXIT_ERROR

    trajectory, csv_meta = (None, {})
    if args.trajectory:
        trajectory, csv_meta = read_trajectory_csv(args.trajectory)

    if args.scenario is None:
        report = certify_consensus(trajectory)
        print(format_consensus_report(report, Path(args.trajectory).stem, csv_meta.get("scenario")))
        return EXIT_OK if report.reached_consensus else EXIT_FAILED

    scenario = _load_scenario(args)
    if csv_meta.get("scenario") and csv_meta["scenario"] != scenario.hash:
        logger.warning("trajectory was produced by scenario %s, not %s", csv_meta["scenario"], scenario.hash)
    result = certify_scenario(scenario, trajectory)
    text = format_run_report(result)
    print(text)
    out = output_dir(args.out, scenario.outputs.directory)
    report_path = out / scenario.outputs.report
    report_path.write_text(text, encoding="utf-8")
    report_path.with_suffix(".json").write_text(format_json(report_document(result)), encoding="utf-8")
    print(f"Wrote {report_path}")
    return EXIT_OK if result.passed else EXIT_FAILED


def _verify_contraction(sizes: Sequence[int], samples: int, seed: int) -> bool:
    reports = [verify_lemma_contraction(n, delta, fraction / math.sqrt(n), samples, seed)
               for n in sizes for delta in CONTRACTION_DELTAS for fraction in CONTRACTION_EPS_FRACTIONS]
    print(format_contraction_reports(reports))
    return all(r.passed for r in reports)


def _verify_diameter(sizes: Sequence[int], samples: int, seed: int) -> bool:
    cones = [verify_cone_diameter(n, gamma, samples, seed) for n in sizes for gamma in DIAMETER_GAMMAS]
    decay = [verify_diameter_decay(sample_blend_matrix(n, 0.3, seed), 0.5 / math.sqrt(n), 6, samples, seed)
             for n in sizes]
    print(format_diameter_reports(cones, decay))
    return all(r.passed for r in cones) and all(r.passed for r in decay)


def _verify_sandwich(sizes: Sequence[int], samples: int, seed: int) -> bool:
    reports = [verify_sandwich(n, samples, seed) for n in sizes]
    print(format_sandwich_reports(reports, sizes))
    return all(r.passed for r in reports)


def _verify_two_cone(seed: int) -> bool:
    report = two_cone_demo(seed=seed)
    print(format_two_cone_report(report))
    return report.passed


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    suites = ("contraction", "diameter", "sandwich", "two_cone") if args.suite == "all" else (args.suite,)
    passed = True
    for suite in suites:
        if suite == "contraction":
            passed &= _verify_contraction(args.n or parse_sizes("2..8"), args.samples or 10_000, seed)
        elif suite == "diameter":
            passed &= _verify_diameter(args.n or [2, 3], args.samples or 1000, seed)
        elif suite == "sandwich":
            passed &= _verify_sandwich(args.n or parse_sizes("2..10"), args.samples or 10_000, seed)
        else:
            passed &= _verify_two_cone(seed)
    print(f"Overall: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAILED


def cmd_sweep(args) -> int:
    scenario = _load_scenario(args)
    values = [parse_value(v) for v in args.values]
    rows = sweep(scenario, args.param, values, n_jobs=args.jobs)
    print(format_sweep_table(args.param, rows))
    return EXIT_OK


def cmd_plot(args) -> int:
    source = Path(args.input)
    out = output_dir(args.out)
    target = out / f"{source.stem}.{args.kind}.svg"
    if args.kind == "signal":
        signal = read_signal_trace(source)
        plot_signal(signal, tuple(args.edge), target)
    else:
        trajectory, metadata = read_trajectory_csv(source)
        if args.kind == "states":
            plot_states(trajectory, target, source.stem, metadata.get("scenario"))
        else:
            try:
                report = certify_consensus(trajectory)
            except ParameterError as e:
                logger.warning("drawing without a fitted line: %s", e)
                report = None
            plot_metric(trajectory, target, report, source.stem, metadata.get("scenario"))
    print(f"Wrote {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hilbert-consensus",
        description="Simulate and certify consensus of multi-agent systems in Hilbert's projective metric",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s simulate --scenario scenarios/fig1.toml --out runs
  %(prog)s certify --scenario scenarios/moreau_ltv.toml
  %(prog)s certify --trajectory runs/fig1.csv
  %(prog)s verify contraction --n 2..6 --samples 10000
  %(prog)s verify all
  %(prog)s sweep --scenario scenarios/chain10.toml --param topology.delta --values 0.1 0.5 1.0 --jobs 4
  %(prog)s plot signal runs/chain10.signal.csv --edge 0 1

Agent count formats (--n):
  4             = a single size
  2..6          = every size from 2 to 6
  2,3,8         = a list of sizes

Default output directory: --out, else outputs.dir of the scenario, else
$HILBERT_CONSENSUS_OUT, else the working directory.
        """
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='Log debug detail')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='Log warnings and errors only')

    commands = parser.add_subparsers(dest='command', required=True)

    simulate_cmd = commands.add_parser('simulate', help='Integrate a scenario and write its trajectory CSV')
    certify_cmd = commands.add_parser('certify', help='Certify consensus of a scenario or a trajectory CSV')
    sweep_cmd = commands.add_parser('sweep', help='Certify a scenario once per value of one parameter')
    for command in (simulate_cmd, certify_cmd, sweep_cmd):
        command.add_argument('--scenario', required=command is not certify_cmd, help='Path to the TOML scenario')
        command.add_argument('--seed', type=int, help='Override the scenario seed')
        command.add_argument('--out', help='Output directory')
    certify_cmd.add_argument('--trajectory', help='Trajectory CSV to certify instead of simulating')
    sweep_cmd.add_argument('--param', required=True, help='Dotted parameter path, e.g. topology.delta')
    sweep_cmd.add_argument('--values', nargs='*', default=[], help='Values to sweep')
    sweep_cmd.add_argument('--jobs', type=int, default=1, help='Parallel workers (default: 1)')

    verify_cmd = commands.add_parser('verify', help='Run the cone and metric verification suites')
    verify_cmd.add_argument('suite', choices=SUITES, help='Suite to run')
    verify_cmd.add_argument('--n', type=parse_sizes, help='Agent counts: 4, 2..6 or 2,3,8')
    verify_cmd.add_argument('--samples', type=int, help='Samples per configuration')
    verify_cmd.add_argument('--seed', type=int, help='Seed (default: 0)')

    plot_cmd = commands.add_parser('plot', help='Draw an SVG figure from a trajectory CSV or signal trace')
    plot_cmd.add_argument('kind', choices=PLOT_KINDS, help='states, metric (trajectory CSV) or signal (trace)')
    plot_cmd.add_argument('input', help='Trajectory CSV or signal trace')
    plot_cmd.add_argument('--edge', nargs=2, type=int, default=[0, 1], metavar=('I', 'J'),
                          help='Link (i, j) of a signal plot, 0-based (default: 0 1)')
    plot_cmd.add_argument('--out', help='Output directory')
    return parser


COMMANDS = {
    'simulate': cmd_simulate,
    'certify': cmd_certify,
    'verify': cmd_verify,
    'sweep': cmd_sweep,
    'plot': cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main command line interface."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)

    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"Error: Could not find file '{e.filename}'", file=sys.stderr)
        return EXIT_ERROR
    except ConsensusToolError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        print("\nOperation cancelled by user", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
