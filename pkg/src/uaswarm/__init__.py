"""Uncertainty-aware multiagent planning and landmark frame alignment, in simulation."""

__version__ = "0.1.0"
