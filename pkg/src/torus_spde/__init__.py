"""Simulation and analysis of white-noise-driven parabolic SPDEs on the torus."""

__version__ = "0.1.0"
