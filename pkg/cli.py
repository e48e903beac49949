import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from heston_forwards import ReportRenderer, create_greek_service
from heston_forwards.analytics import ProbeSet
from heston_forwards.errors import ArgumentError, HestonForwardsError
from heston_forwards.filipovic import evaluate
from heston_forwards.pricing import atm_strike, price_option
from heston_forwards.reporting import write_report
from heston_forwards.scenario import Scenario, load_scenario, with_run_overrides
from heston_forwards.simulate import MCEstimate, PathEngine, simulate_path, terminal_forwards, z_score
from heston_forwards.verify import FAULTS, SUITES, run_verification

logger = logging.getLogger("heston_forwards.cli")


def load_command_config(args):
    """Scenario from --config (or the environment) with the command-line run overrides applied."""
    config = load_scenario(args.config)
    return with_run_overrides(config, seed=args.seed, threads=args.threads,
                              out=str(args.out) if args.out else None)


def _int_list(text: str) -> List[int]:
    try:
        values = [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ArgumentError(f"Expected a comma-separated list of integers, got '{text}'")
    if not values or any(v < 1 for v in values):
        raise ArgumentError(f"Expected positive integers, got '{text}'")
    return values


def simulate_command(args) -> int:
    """Dump a few full paths at the probe maturities and summarise f(τ, x) over all paths."""
    config = load_command_config(args)
    run = config.run
    scenario = Scenario.from_config(config)
    spec = scenario.spec
    probes = np.asarray(ProbeSet(tuple(run.probes)).validate(spec).maturities)

    rows = []
    for path in range(run.RUN_DUMP_PATHS):
        bundle = simulate_path(spec, run.RUN_SEED, path)
        y_values = evaluate(bundle.Y, probes)
        x_values = evaluate(bundle.X, probes)
        for step in range(y_values.shape[0]):
            for j, x in enumerate(probes):
                rows.append({"path": path, "step": step, "probe_x": x,
                             "Y_value": y_values[step, j], "X_value": x_values[step, j]})
    paths_file = write_report("paths", rows, run.RUN_OUT, as_json=args.json)

    engine = PathEngine(spec, run.RUN_SEED, batch_size=run.RUN_BATCH_SIZE, threads=run.RUN_THREADS)
    samples = terminal_forwards(engine, probes, run.RUN_N_PATHS)
    expected = evaluate(spec.s_semigroup.apply(spec.horizon, spec.x0), probes)
    summary = []
    for j, x in enumerate(probes):
        estimate = MCEstimate.from_samples(samples[:, j])
        summary.append({"probe_x": x, "n_paths": estimate.n_paths, "mean": estimate.value,
                        "stderr": estimate.stderr, "expected": float(expected[j]),
                        "z_score": z_score(estimate.value, float(expected[j]), estimate.stderr)})
    summary_file = write_report("simulate_summary", summary, run.RUN_OUT, as_json=args.json)

    renderer = ReportRenderer.from_config(run)
    print(renderer.render_template("simulate_summary", {
        "n_paths": run.RUN_N_PATHS, "tau": spec.horizon, "seed": run.RUN_SEED, "rows": summary,
        "paths_file": paths_file, "summary_file": summary_file,
    }), end="")
    return 0


def _closed_form_price(scenario: Scenario) -> float:
    """Price without Monte Carlo where one exists, NaN otherwise.

    E[X_τ] = S_τ x0, so the linear payoff prices from the mean curve; a scenario
    without volatility has every path equal to S_τ x0.
    """
    spec, opt = scenario.spec, scenario.option
    if opt.payoff.kind != "linear" and not scenario.is_deterministic:
        return math.nan
    level = atm_strike(spec, opt)
    return opt.discount * float(opt.payoff.value(level))


def price_command(args) -> int:
    """Price the scenario option, once per KL truncation with --sweep-modes."""
    config = load_command_config(args)
    run = config.run
    modes = _int_list(args.sweep_modes) if args.sweep_modes else [None]

    rows = []
    for count in modes:
        scenario = Scenario.from_config(config, modes=count)
        opt = scenario.option
        estimate = price_option(scenario.spec, opt, run.RUN_N_PATHS, run.RUN_SEED,
                                threads=run.RUN_THREADS, batch_size=run.RUN_BATCH_SIZE)
        closed = _closed_form_price(scenario)
        rows.append({
            "payoff": opt.payoff.kind, "K": opt.payoff.strike, "kappa": opt.payoff.smoothing,
            "tau": opt.tau, "x": opt.x, "d": opt.d, "r": opt.r, "n_paths": estimate.n_paths,
            "price": estimate.value, "stderr": estimate.stderr, "seed": run.RUN_SEED,
            "closed_form": closed,
            "z_score": math.nan if math.isnan(closed) else z_score(estimate.value, closed, estimate.stderr),
            "modes": scenario.spec.q_w.count,
        })
    report_file = write_report("price", rows, run.RUN_OUT, as_json=args.json)

    renderer = ReportRenderer.from_config(run)
    print(renderer.render_template("price", {"rows": rows, "report_file": report_file}), end="")
    return 0


def greeks_command(args) -> int:
    """Run every configured estimator on every requested parameter and cross-check them."""
    config = load_command_config(args)
    run = config.run
    scenario = Scenario.from_config(config)
    service = create_greek_service(config.greek)

    results = service.run(scenario.spec, scenario.option, scenario.requests())
    rows = [result.as_row() for result in results]
    concordance = service.concordance(results)
    write_report("greeks", rows, run.RUN_OUT, as_json=args.json)
    write_report("concordance", concordance, run.RUN_OUT, as_json=args.json)

    renderer = ReportRenderer.from_config(run)
    print(renderer.render_template("greeks", {
        "n_paths": run.RUN_N_PATHS, "seed": run.RUN_SEED, "rows": rows, "concordance": concordance,
    }), end="")
    return 0


def verify_command(args) -> int:
    """Run the verification suites; exit 1 when any check fails."""
    config = load_command_config(args)
    run = config.run
    suites = [item.strip() for item in args.suite.split(",") if item.strip()] if args.suite else list(SUITES)
    scenario = Scenario.from_config(config)

    report = run_verification(scenario, suites=suites, faults=args.inject_fault or ())
    write_report("verify", [check.as_row() for check in report.checks], run.RUN_OUT, as_json=args.json)
    write_report("analytics", report.analytics, run.RUN_OUT, as_json=args.json)

    renderer = ReportRenderer.from_config(run)
    print(renderer.render_template("verify", {
        "checks": report.checks, "failures": report.failures,
        "passed_count": len(report.checks) - len(report.failures),
    }), end="")
    return 0 if report.passed else 1


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Heston forward-curve Monte Carlo CLI")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # Common arguments
    parent_parser = argparse.ArgumentParser(add_help=False)
    parent_parser.add_argument('--config', type=Path, help="Path to a KEY=VALUE scenario file")
    parent_parser.add_argument('--seed', type=_seed, help="Master seed (overrides RUN_SEED)")
    parent_parser.add_argument('--threads', type=int, help="Worker threads; never changes results")
    parent_parser.add_argument('--out', type=Path, help="Output directory (overrides RUN_OUT)")
    parent_parser.add_argument('--json', action='store_true', help="Also write a JSON mirror of every report")
    parent_parser.add_argument('--log-level', default="WARNING",
                               choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")

    simulate_parser = subparsers.add_parser('simulate', parents=[parent_parser],
                                            help="Simulate paths and summarise the terminal curve")
    simulate_parser.set_defaults(func=simulate_command)

    price_parser = subparsers.add_parser('price', parents=[parent_parser], help="Price the scenario option")
    price_parser.add_argument('--sweep-modes', help="Comma-separated KL truncations, e.g. 2,4,8")
    price_parser.set_defaults(func=price_command)

    greeks_parser = subparsers.add_parser('greeks', parents=[parent_parser],
                                          help="Estimate Greeks with every configured estimator")
    greeks_parser.set_defaults(func=greeks_command)

    verify_parser = subparsers.add_parser('verify', parents=[parent_parser], help="Run the verification suites")
    verify_parser.add_argument('--suite', help=f"Comma-separated subset of {', '.join(SUITES)}")
    verify_parser.add_argument('--inject-fault', action='append', choices=FAULTS,
                               help="Corrupt a component to check that verification catches it")
    verify_parser.set_defaults(func=verify_command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not hasattr(args, 'func'):
        parser.print_help()
        return 2

    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HestonForwardsError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}")
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
