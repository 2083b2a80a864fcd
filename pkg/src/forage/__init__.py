"""Heterogeneous destructive-foraging simulator and cooperation metrics."""

__version__ = "0.1.0"
