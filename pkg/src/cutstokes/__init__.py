"""Unfitted Q2-Q1 solver for two-phase Stokes flow with interface slip."""

__version__ = "0.1.0"
