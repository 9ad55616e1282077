#!/usr/bin/env python3
"""Run the simulation-study grids at desk scale and write one CSV per table."""
import argparse
import logging
from pathlib import Path
import sys
from typing import NamedTuple, Optional

# Add pvalue_spc package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from pvalue_spc.charts.core import AlarmRule, ChartKind
from pvalue_spc.main import LOG_FORMAT
from pvalue_spc.monitoring.localize import AggregateMethod
from pvalue_spc.monitoring.run_length import estimate_run_length, localisation_study
from pvalue_spc.sources.scenarios import Ar1Output, OocLaw, ScenarioFamily, ScenarioSpec
from pvalue_spc.utils.config import Settings
from pvalue_spc.utils.report import TableRow, emit_csv

ALPHAS = (0.01, 0.05)
ALARM_COUNTS = (1, 5)
KS_BASELINES = (50, 100, 200)
KS_EWMA_CHARTS = [
    ChartKind.q_tilde(0.5, -0.9),
    ChartKind.q_tilde(0.5, -0.8),
    ChartKind.q_bar(0.9, 1.0),
    ChartKind.q_bar(0.95, 1.0),
]
OUT_OF_CONTROL_CHARTS = [ChartKind.raw(), *KS_EWMA_CHARTS]
PERSISTENT_OOC = [(OocLaw.SHIFT, 0.5), (OocLaw.SHIFT, 1.0), (OocLaw.SCALE, 2.0), (OocLaw.CAUCHY, None)]
DYNAMIC_OOC = [(OocLaw.DYN_MEAN, 0.5), (OocLaw.DYN_MEAN, 0.25), (OocLaw.DYN_VAR, 1.0), (OocLaw.DYN_VAR, 2.0)]
LOCALISATION_SHIFTS = (0.5, 1.0)
LOCALISATION_CORRELATIONS = (0.0, 0.5, 0.9)


class RunLengthCell(NamedTuple):
    spec: ScenarioSpec
    kind: ChartKind
    alpha: float
    k: int


class LocalisationCell(NamedTuple):
    spec: ScenarioSpec
    alpha: float


def _cells(specs, kinds, alphas=ALPHAS, counts=ALARM_COUNTS) -> list[RunLengthCell]:
    return [
        RunLengthCell(spec, kind, alpha, k)
        for spec in specs
        for kind in kinds
        for alpha in alphas
        for k in counts
    ]


def grid_two_phase_normal() -> list[RunLengthCell]:
    """Raw chart on in-control two-phase normal data."""
    return _cells([ScenarioSpec(family=ScenarioFamily.TWO_PHASE_NORMAL)], [ChartKind.raw()])


def grid_ar1() -> list[RunLengthCell]:
    """Marginal and sup p-value charts on an in-control AR(1) process."""
    specs = [
        ScenarioSpec(family=ScenarioFamily.AR1, beta=beta, ar1_output=output)
        for beta in (0.1, 0.5)
        for output in (Ar1Output.MARGINAL, Ar1Output.SUP)
    ]
    return _cells(specs, [ChartKind.raw()])


def grid_ks_in_control() -> list[RunLengthCell]:
    """Raw KS charts with variable sample sizes, in control."""
    specs = [ScenarioSpec(family=ScenarioFamily.KS, n0=n0) for n0 in (20, 50, 100)]
    return _cells(specs, [ChartKind.raw()])


def grid_ks_ewma_in_control() -> list[RunLengthCell]:
    """Q~ and Q-bar charts over in-control KS p-values."""
    specs = [ScenarioSpec(family=ScenarioFamily.KS, n0=n0) for n0 in KS_BASELINES]
    return _cells(specs, KS_EWMA_CHARTS, alphas=(0.05, 0.1))


def _ks_out_of_control(laws) -> list[RunLengthCell]:
    specs = [
        ScenarioSpec(family=ScenarioFamily.KS, n0=n0, ooc=ooc, ooc_param=param)
        for n0 in KS_BASELINES
        for ooc, param in laws
    ]
    return _cells(specs, OUT_OF_CONTROL_CHARTS)


def grid_ks_persistent() -> list[RunLengthCell]:
    """Detection delay for persistent out-of-control laws."""
    return _ks_out_of_control(PERSISTENT_OOC)


def grid_ks_dynamic() -> list[RunLengthCell]:
    """Detection delay for dynamic out-of-control laws."""
    return _ks_out_of_control(DYNAMIC_OOC)


def _localisation_cells(family: ScenarioFamily, n0: Optional[int] = None) -> list[LocalisationCell]:
    extra = {"n0": n0} if n0 is not None else {}
    return [
        LocalisationCell(ScenarioSpec(family=family, delta=delta, rho=rho, **extra), alpha)
        for delta in LOCALISATION_SHIFTS
        for rho in LOCALISATION_CORRELATIONS
        for alpha in ALPHAS
    ]


def grid_localisation_normal() -> list[LocalisationCell]:
    """Run length, true directions found and one-step FWE for normal vectors."""
    return _localisation_cells(ScenarioFamily.MV_NORMAL)


def grid_localisation_cauchy() -> list[LocalisationCell]:
    """The same study for scaled Cauchy vectors with Mann-Whitney p-values."""
    return [cell for n0 in (20, 50, 100) for cell in _localisation_cells(ScenarioFamily.MV_CAUCHY, n0)]


TABLES = {
    "two_phase_normal": grid_two_phase_normal,
    "ar1": grid_ar1,
    "ks_in_control": grid_ks_in_control,
    "ks_ewma_in_control": grid_ks_ewma_in_control,
    "ks_persistent": grid_ks_persistent,
    "ks_dynamic": grid_ks_dynamic,
    "localisation_normal": grid_localisation_normal,
    "localisation_cauchy": grid_localisation_cauchy,
}


def run_length_row(cell: RunLengthCell, args) -> TableRow:
    """Simulate one cell and turn its summary into a table row."""
    spec, kind = cell.spec, cell.kind
    summary = estimate_run_length(
        spec,
        kind,
        AlarmRule(alpha=cell.alpha, k=cell.k),
        reps=args.reps,
        max_horizon=args.max_horizon,
        seed=args.seed,
        threads=args.threads,
    ).summary
    is_ks = spec.family is ScenarioFamily.KS
    return TableRow(
        scenario=spec.family.value,
        chart=kind.label,
        alpha=cell.alpha,
        k=cell.k,
        lam=kind.lam,
        r=kind.r,
        beta=spec.beta,
        n0=spec.n0,
        ooc=spec.ooc.value if is_ks else None,
        reps=summary.reps,
        mean=summary.mean,
        std_error=summary.std_error,
        bound=summary.bound,
        censored=summary.censored_count,
        restricted_mean=summary.restricted_mean if summary.censored else None,
    )


def localisation_row(cell: LocalisationCell, args) -> TableRow:
    """Run the localisation study for one cell."""
    spec = cell.spec
    study = localisation_study(
        spec,
        cell.alpha,
        reps=args.reps,
        fwe_reps=args.fwe_reps,
        method=AggregateMethod.BONFERRONI,
        max_horizon=args.max_horizon,
        seed=args.seed,
        threads=args.threads,
    )
    return TableRow(
        scenario=spec.family.value,
        alpha=cell.alpha,
        n0=spec.n0,
        delta=spec.delta,
        rho=spec.rho,
        reps=args.reps,
        mean=study.mean_run_length,
        std_error=study.run_length_std_error,
        censored=study.censored_count,
        mean_ooc=study.mean_ooc,
        mean_fwe=study.mean_fwe,
    )


def run_table(name: str, args) -> list[TableRow]:
    rows = []
    for cell in TABLES[name]():
        if isinstance(cell, LocalisationCell):
            rows.append(localisation_row(cell, args))
        else:
            rows.append(run_length_row(cell, args))
    return rows


def main():
    """Run the selected tables."""
    settings = Settings()
    parser = argparse.ArgumentParser(description="Reproduce the simulation tables")
    parser.add_argument("--tables", nargs="+", choices=list(TABLES), default=list(TABLES))
    parser.add_argument("--reps", type=int, default=settings.reps)
    parser.add_argument("--fwe-reps", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=settings.seed)
    parser.add_argument("--max-horizon", type=int, default=100_000)
    parser.add_argument("--threads", type=int, default=settings.threads)
    parser.add_argument("--out-dir", default="data/tables")
    parser.add_argument("--precision", action="store_true", help="write full-precision numbers")
    args = parser.parse_args()

    logging.basicConfig(level=settings.log_level_number, format=LOG_FORMAT, stream=sys.stderr)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    print(f"🎲 Reproducing {len(args.tables)} table(s) with {args.reps} reps, seed {args.seed}")
    for name in args.tables:
        print(f"\n📊 {name} ({len(TABLES[name]())} cells)...")
        rows = run_table(name, args)
        path = out_dir / f"{name}.csv"
        emit_csv(rows, path, full_precision=args.precision)
        print(f"   ✅ {len(rows)} rows → {path}")

    print("\n✨ Done")


if __name__ == "__main__":
    main()
