"""Finitary martingale bounds, fluctuation counters and metastability rates."""

__version__ = "0.1.0"
