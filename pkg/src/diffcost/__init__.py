"""Differential cost analysis of two program versions via potential functions."""

__version__ = "0.1.0"
