"""Run-length bounds, Monte Carlo run-length estimation and localisation."""
