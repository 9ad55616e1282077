"""Exact distribution theory for EWMA processes of uniform variables."""
