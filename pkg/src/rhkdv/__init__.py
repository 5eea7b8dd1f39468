"""Pointwise Riemann-Hilbert solver for KdV fields built from solitons,
dispersive radiation and finite-genus backgrounds."""

__version__ = "0.1.0"
