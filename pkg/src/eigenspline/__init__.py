"""Smoothing splines with low-rank approximation by eigensystem truncation."""

__version__ = "0.1.0"
