"""Finite-gap integration of the Heisenberg ferromagnet hierarchy."""

__version__ = "0.1.0"
