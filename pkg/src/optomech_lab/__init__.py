"""Simulation toolkit for hybrid cavity optomechanics."""

__version__ = "0.1.0"
