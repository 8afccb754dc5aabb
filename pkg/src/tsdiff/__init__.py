"""Conditional score-based generation of multivariate time-series."""

from .engine.backend import BACKEND

__version__ = "0.1.0"
