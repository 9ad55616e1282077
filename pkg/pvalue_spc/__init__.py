"""p-value charts for statistical process control with distribution-free run-length guarantees."""

__version__ = "0.1.0"
