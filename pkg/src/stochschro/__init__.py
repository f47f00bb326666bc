"""Finite element laboratory for the linear Schroedinger equation with additive Q-Wiener noise."""

__version__ = "0.1.0"
