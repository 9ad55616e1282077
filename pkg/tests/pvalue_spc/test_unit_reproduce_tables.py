#!/usr/bin/env python3
"""Unit tests for the table grids of the batch reproduction script."""
import sys
from argparse import Namespace
from pathlib import Path

import pytest

# Add pvalue_spc package and the simulation scripts to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))
sys.path.insert(0, str(Path(__file__).parent.parent.parent / "scripts" / "simulation"))

from pvalue_spc.charts.core import ChartFamily
from pvalue_spc.sources.scenarios import Ar1Output, OocLaw, ScenarioFamily
from reproduce_tables import (
    TABLES,
    grid_ar1,
    grid_ks_dynamic,
    grid_ks_ewma_in_control,
    grid_ks_in_control,
    grid_ks_persistent,
    grid_localisation_cauchy,
    grid_localisation_normal,
    grid_two_phase_normal,
    run_table,
)


def _charts(cells) -> set[tuple]:
    return {(cell.kind.family, cell.kind.lam, cell.kind.r) for cell in cells}


def test_two_phase_normal_grid():
    """Raw chart on two-phase normal data, alpha in {0.01, 0.05}, k in {1, 5}."""
    cells = grid_two_phase_normal()
    assert [(cell.alpha, cell.k) for cell in cells] == [(0.01, 1), (0.01, 5), (0.05, 1), (0.05, 5)]
    assert all(cell.spec.family is ScenarioFamily.TWO_PHASE_NORMAL for cell in cells)
    assert _charts(cells) == {(ChartFamily.RAW, None, None)}


def test_ar1_grid():
    """Both AR(1) streams for beta in {0.1, 0.5}."""
    cells = grid_ar1()
    assert len(cells) == 16
    assert {(cell.spec.beta, cell.spec.ar1_output) for cell in cells} == {
        (0.1, Ar1Output.MARGINAL),
        (0.1, Ar1Output.SUP),
        (0.5, Ar1Output.MARGINAL),
        (0.5, Ar1Output.SUP),
    }
    assert {cell.alpha for cell in cells} == {0.01, 0.05}
    assert {cell.k for cell in cells} == {1, 5}


def test_ks_in_control_grids():
    """Raw KS chart for n0 in {20, 50, 100}; EWMA-like charts for n0 in {50, 100, 200}."""
    raw = grid_ks_in_control()
    assert {cell.spec.n0 for cell in raw} == {20, 50, 100}
    assert {cell.alpha for cell in raw} == {0.01, 0.05}
    assert {cell.k for cell in raw} == {1, 5}
    assert _charts(raw) == {(ChartFamily.RAW, None, None)}

    ewma = grid_ks_ewma_in_control()
    assert len(ewma) == 3 * 4 * 2 * 2
    assert {cell.spec.n0 for cell in ewma} == {50, 100, 200}
    assert {cell.alpha for cell in ewma} == {0.05, 0.1}
    assert _charts(ewma) == {
        (ChartFamily.Q_TILDE, 0.5, -0.9),
        (ChartFamily.Q_TILDE, 0.5, -0.8),
        (ChartFamily.Q_BAR, 0.9, 1.0),
        (ChartFamily.Q_BAR, 0.95, 1.0),
    }
    assert all(cell.spec.in_control for cell in raw + ewma)


def test_ks_out_of_control_grids():
    """Raw, Q~ and Q-bar charts against persistent and dynamic laws."""
    persistent = grid_ks_persistent()
    dynamic = grid_ks_dynamic()
    assert len(persistent) == len(dynamic) == 3 * 4 * 5 * 2 * 2
    assert {(cell.spec.ooc, cell.spec.ooc_param) for cell in persistent} == {
        (OocLaw.SHIFT, 0.5),
        (OocLaw.SHIFT, 1.0),
        (OocLaw.SCALE, 2.0),
        (OocLaw.CAUCHY, None),
    }
    assert {(cell.spec.ooc, cell.spec.ooc_param) for cell in dynamic} == {
        (OocLaw.DYN_MEAN, 0.5),
        (OocLaw.DYN_MEAN, 0.25),
        (OocLaw.DYN_VAR, 1.0),
        (OocLaw.DYN_VAR, 2.0),
    }
    for cells in (persistent, dynamic):
        assert {cell.spec.n0 for cell in cells} == {50, 100, 200}
        assert {cell.alpha for cell in cells} == {0.01, 0.05}
        assert {cell.k for cell in cells} == {1, 5}
        assert (ChartFamily.RAW, None, None) in _charts(cells)
        assert len(_charts(cells)) == 5


def test_localisation_grids():
    """delta in {0.5, 1}, rho in {0, 0.5, 0.9}, alpha in {0.01, 0.05}; Cauchy n0 in {20, 50, 100}."""
    normal = grid_localisation_normal()
    assert len(normal) == 12
    assert {(cell.spec.delta, cell.spec.rho, cell.alpha) for cell in normal} == {
        (delta, rho, alpha) for delta in (0.5, 1.0) for rho in (0.0, 0.5, 0.9) for alpha in (0.01, 0.05)
    }

    cauchy = grid_localisation_cauchy()
    assert len(cauchy) == 36
    assert {cell.spec.n0 for cell in cauchy} == {20, 50, 100}
    assert all(cell.spec.family is ScenarioFamily.MV_CAUCHY for cell in cauchy)


def test_every_table_is_registered():
    """Eight tables, each with at least one cell."""
    assert len(TABLES) == 8
    assert all(TABLES[name]() for name in TABLES)


def test_run_table_writes_one_row_per_cell():
    """A tiny run of the two-phase table gives rows carrying the bound."""
    args = Namespace(reps=3, fwe_reps=3, seed=5, max_horizon=2000, threads=1)
    rows = run_table("two_phase_normal", args)
    assert len(rows) == 4
    assert [row.bound for row in rows] == pytest.approx([50.5, 250.5, 10.5, 50.5])
    assert all(row.reps == 3 for row in rows)
