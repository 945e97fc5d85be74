"""Spectral and dispersive numerics for the one-gap Lame operator."""

__version__ = "0.1.0"
