#!/usr/bin/env python3
"""
Command-line entry point for p-value charting runs.

Subcommands:
    bounds    ARL / k-ARL lower bounds
    simulate  Monte Carlo run lengths for a scenario and chart
    density   exact density and distribution function of a uniform EWMA
    localize  directional localisation of a CSV of one-sided p-values

Every option can also come from a ``key = value`` file passed with
``--config``; command-line flags win over the file, which wins over the
PVSPC_* environment settings.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from pvalue_spc.charts.core import AlarmRule, ChartFamily, ChartKind
from pvalue_spc.distributions.uniform_ewma import UniformEwmaSpec, density_grid, moments
from pvalue_spc.monitoring.localize import AggregateMethod, localise_sequence
from pvalue_spc.monitoring.run_length import (
    estimate_run_length,
    karl_bound_conditional,
    karl_bound_superuniform,
    localisation_study,
)
from pvalue_spc.sources.scenarios import Ar1Output, OocLaw, ScenarioFamily, ScenarioSpec
from pvalue_spc.sources.two_sample import TestMode
from pvalue_spc.utils.config import Settings, load_config_file
from pvalue_spc.utils.report import (
    TableRow,
    emit_csv,
    emit_density_csv,
    emit_localisation_csv,
    read_directional_csv,
)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}

logger = logging.getLogger(__name__)


class UsageError(ValueError):
    """An invalid or incomplete combination of options."""


def _values(enum_type) -> list[str]:
    return [member.value for member in enum_type]


def _add_output_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", default=None, help="output file (default: standard output)")
    sub.add_argument(
        "--precision",
        dest="full_precision",
        action="store_true",
        default=None,
        help="write numbers at full precision instead of 6 significant digits",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pvalue-spc", description="p-value control charts")
    parser.add_argument("--config", default=None, help="key = value file mirroring the flags")
    parser.add_argument("--log-level", default=None, help="logging level (default: INFO)")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    bounds = commands.add_parser("bounds", help="print an ARL / k-ARL lower bound")
    bounds.add_argument("--alpha", type=float)
    bounds.add_argument("--k", type=int, default=1)
    bounds.add_argument(
        "--conditional",
        action="store_true",
        default=False,
        help="bound for conditionally super-uniform charts (k / alpha)",
    )

    simulate = commands.add_parser("simulate", help="estimate run lengths by simulation")
    simulate.add_argument("--scenario", choices=_values(ScenarioFamily))
    simulate.add_argument("--chart", choices=_values(ChartFamily), default=None)
    simulate.add_argument("--alpha", type=float)
    simulate.add_argument("--k", type=int, default=1)
    simulate.add_argument("--lambda", dest="lam", type=float, default=None)
    simulate.add_argument("--r", type=float, default=None)
    simulate.add_argument("--beta", type=float, default=None, help="AR(1) coefficient")
    simulate.add_argument("--e-beta", type=float, default=None, help="p-to-e calibrator exponent")
    simulate.add_argument("--n0", type=int, default=None)
    simulate.add_argument("--delta", type=float, default=None)
    simulate.add_argument("--rho", type=float, default=None)
    simulate.add_argument("--ooc", choices=_values(OocLaw), default=None)
    simulate.add_argument("--ooc-param", type=float, default=None)
    simulate.add_argument("--ks-mode", choices=_values(TestMode), default=None)
    simulate.add_argument("--exact-cutoff", type=int, default=None)
    simulate.add_argument("--ar1-stream", choices=_values(Ar1Output), default=None)
    simulate.add_argument("--method", choices=_values(AggregateMethod), default=None)
    simulate.add_argument("--fwe-reps", type=int, default=None)
    simulate.add_argument("--reps", type=int, default=None)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--max-horizon", type=int, default=None)
    simulate.add_argument("--threads", type=int, default=None)
    _add_output_options(simulate)

    density = commands.add_parser("density", help="uniform-EWMA density and distribution function")
    density.add_argument("--lambda", dest="lam", type=float)
    density.add_argument("--t", type=int)
    density.add_argument("--u0", type=float)
    density.add_argument("--grid", type=int, default=101)
    density.add_argument(
        "--plot-data",
        action="store_true",
        default=False,
        help="bare space-separated (u, pdf, cdf) columns without a header",
    )
    _add_output_options(density)

    localize = commands.add_parser("localize", help="directional localisation per time step")
    localize.add_argument("--input")
    localize.add_argument("--alpha", type=float)
    localize.add_argument("--method", choices=_values(AggregateMethod), default=AggregateMethod.BONFERRONI.value)
    localize.add_argument("--stop-at-first-alarm", action="store_true", default=False)
    _add_output_options(localize)

    return parser


def _parse_bool(key: str, value: str) -> bool:
    word = value.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise UsageError(f"config key {key!r} expects true or false, got {value!r}")


def _apply_config_file(parser: argparse.ArgumentParser, command: str, path: str) -> None:
    """Install config-file values as defaults of the chosen subcommand."""
    commands = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = commands.choices[command]
    by_flag = {
        option.lstrip("-").replace("-", "_"): action
        for action in sub._actions
        for option in action.option_strings
    }
    defaults = {}
    for key, value in load_config_file(path).items():
        action = by_flag.get(key)
        if action is None or action.dest == "help":
            raise UsageError(f"{path}: unknown key {key!r} for the {command} command")
        defaults[action.dest] = _parse_bool(key, value) if action.nargs == 0 else value
    sub.set_defaults(**defaults)


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")


# Options that fall back to Settings when neither flag nor config file sets them
SETTINGS_DEFAULTS = {
    "simulate": ("seed", "reps", "max_horizon", "threads", "full_precision"),
    "density": ("full_precision",),
    "localize": ("full_precision",),
}


def _fill_from_settings(args: argparse.Namespace, settings: Settings, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            setattr(args, name, getattr(settings, name))


def _run_bounds(args: argparse.Namespace) -> int:
    _require(args, "alpha")
    if args.conditional:
        value = karl_bound_conditional(args.alpha, args.k)
    else:
        value = karl_bound_superuniform(args.alpha, args.k)
    print(f"{value:.10g}")
    return 0


def _build_scenario(args: argparse.Namespace, settings: Settings) -> ScenarioSpec:
    family = ScenarioFamily(args.scenario)
    params = {
        "delta": args.delta,
        "beta": args.beta,
        "rho": args.rho,
        "n0": args.n0,
        "ooc": args.ooc,
        "ooc_param": args.ooc_param,
        "ar1_output": args.ar1_stream,
        "ks_mode": args.ks_mode,
        "exact_cutoff": args.exact_cutoff,
    }
    if family is ScenarioFamily.KS:
        params["ks_mode"] = args.ks_mode or settings.ks_mode
    if family in (ScenarioFamily.KS, ScenarioFamily.MV_CAUCHY) and args.exact_cutoff is None:
        params["exact_cutoff"] = settings.exact_cutoff
    return ScenarioSpec(family=family, **{k: v for k, v in params.items() if v is not None})


def _run_simulate(args: argparse.Namespace, settings: Settings) -> int:
    _require(args, "scenario", "alpha")
    scenario = _build_scenario(args, settings)
    rule = AlarmRule(alpha=args.alpha, k=args.k)
    logger.info(f"Seed {args.seed}")

    if scenario.is_multivariate:
        if args.chart not in (None, ChartFamily.RAW.value) or args.k != 1:
            raise UsageError(
                "multivariate scenarios run the localisation procedure to the first alarm; "
                "use --chart raw and --k 1"
            )
        method = AggregateMethod(args.method or AggregateMethod.BONFERRONI.value)
        study = localisation_study(
            scenario,
            rule.alpha,
            reps=args.reps,
            fwe_reps=args.fwe_reps or args.reps,
            method=method,
            max_horizon=args.max_horizon,
            seed=args.seed,
            threads=args.threads,
        )
        row = TableRow(
            scenario=scenario.family.value,
            alpha=rule.alpha,
            n0=scenario.n0,
            delta=scenario.delta,
            rho=scenario.rho,
            reps=args.reps,
            mean=study.mean_run_length,
            std_error=study.run_length_std_error,
            censored=study.censored_count,
            mean_ooc=study.mean_ooc,
            mean_fwe=study.mean_fwe,
        )
    else:
        if args.method is not None or args.fwe_reps is not None:
            raise UsageError("--method and --fwe-reps apply to multivariate scenarios only")
        kind = ChartKind(
            family=ChartFamily(args.chart or ChartFamily.RAW.value),
            lam=args.lam,
            r=args.r,
            beta=args.e_beta,
        )
        estimate = estimate_run_length(
            scenario,
            kind,
            rule,
            reps=args.reps,
            max_horizon=args.max_horizon,
            seed=args.seed,
            threads=args.threads,
        )
        summary = estimate.summary
        is_ks = scenario.family is ScenarioFamily.KS
        row = TableRow(
            scenario=scenario.family.value,
            chart=kind.family.value,
            alpha=rule.alpha,
            k=rule.k,
            lam=kind.lam,
            r=kind.r,
            beta=scenario.beta,
            e_beta=kind.beta,
            n0=scenario.n0,
            delta=scenario.delta if "delta" in scenario.model_fields_set else None,
            ooc=scenario.ooc.value if is_ks else None,
            ks_mode=scenario.ks_mode.value if is_ks else None,
            reps=summary.reps,
            mean=summary.mean,
            std_error=summary.std_error,
            bound=summary.bound,
            censored=summary.censored_count,
            restricted_mean=summary.restricted_mean if summary.censored else None,
        )
    emit_csv([row], args.out, full_precision=args.full_precision)
    return 0


def _run_density(args: argparse.Namespace) -> int:
    _require(args, "lam", "t", "u0")
    spec = UniformEwmaSpec(lam=args.lam, t=args.t, u0=args.u0)
    mean, variance = moments(spec)
    lower, upper = spec.support
    logger.info(f"Support [{lower:.6g}, {upper:.6g}], mean {mean:.6g}, variance {variance:.6g}")
    grid = density_grid(spec, args.grid)
    emit_density_csv(grid, args.out, plot_data=args.plot_data, full_precision=args.full_precision)
    return 0


def _run_localize(args: argparse.Namespace) -> int:
    _require(args, "input", "alpha")
    rows = read_directional_csv(args.input)
    reports = list(
        localise_sequence(
            (dp for _, dp in rows),
            args.alpha,
            AggregateMethod(args.method),
            stop_at_first_alarm=args.stop_at_first_alarm,
            times=(time for time, _ in rows),
        )
    )
    for time, report in reports:
        if report.alarm:
            logger.info(f"Alarm at t={time}: directions {[(j, d.value) for j, d in report.directions]}")
    emit_localisation_csv(reports, args.out, full_precision=args.full_precision)
    return 0


def _one_line(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        error = exc.errors()[0]
        location = ".".join(str(part) for part in error["loc"])
        return f"{location}: {error['msg']}" if location else error["msg"]
    return str(exc).splitlines()[0] if str(exc) else type(exc).__name__


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns 0 on success, 2 for invalid options, 1 for I/O failures."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = Settings()
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a command is required: bounds, simulate, density or localize")
        if args.config:
            _apply_config_file(parser, args.command, args.config)
            args = parser.parse_args(argv)
        logging.basicConfig(
            level=args.log_level.upper() if args.log_level else settings.log_level_number,
            format=LOG_FORMAT,
            stream=sys.stderr,
            force=True,
        )

        _fill_from_settings(args, settings, *SETTINGS_DEFAULTS.get(args.command, ()))
        handlers = {
            "bounds": lambda: _run_bounds(args),
            "simulate": lambda: _run_simulate(args, settings),
            "density": lambda: _run_density(args),
            "localize": lambda: _run_localize(args),
        }
        logger.info(f"Resolved configuration: {vars(args)}")
        return handlers[args.command]()
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except ValueError as exc:
        message = _one_line(exc)
        logger.error(message)
        print(f"error: {message}", file=sys.stderr)
        return 2
    except OSError as exc:
        message = _one_line(exc)
        logger.error(message)
        print(f"error: {message}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
