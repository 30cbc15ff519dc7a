"""Robust design and verification of multi-energy systems under demand and weather uncertainty."""

__version__ = "0.1.0"
