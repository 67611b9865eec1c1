"""Learned sloshing simulators with thermodynamic structure, free-surface
perception, and observation-driven correction."""

__version__ = "0.1.0"
