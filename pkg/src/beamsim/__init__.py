"""Deterministic 2D service-robot simulator and autonomy stack."""

__version__ = "0.1.0"
