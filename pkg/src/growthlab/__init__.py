"""Finite-horizon growth model with uninsurable employment risk: solver and aggregation lab."""

__version__ = "0.1.0"
