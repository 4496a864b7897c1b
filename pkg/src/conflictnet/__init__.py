"""Temporal ERGM toolkit for regime-typed conflict networks."""

__version__ = "0.1.0"
