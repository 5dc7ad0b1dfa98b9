"""Exact simulation and analysis of ternary consensus under jamming attacks."""

__version__ = "0.1.0"
