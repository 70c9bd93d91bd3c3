"""Simulation toolkit for hybrid atomic/solid-state quantum devices."""

__version__ = "0.1.0"
