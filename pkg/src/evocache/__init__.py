"""Trace-driven cache replacement toolkit with an evolving popularity predictor."""

__version__ = "0.1.0"
