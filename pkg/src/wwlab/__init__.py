"""Numerical laboratory for paradifferential analysis of periodic water waves."""

__version__ = "0.1.0"
