"""Coefficient identification for ``c(x) u_tt - Δu = 0`` from partial boundary data."""

__version__ = "0.1.0"
