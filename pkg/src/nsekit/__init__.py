"""Noise sensitivity exponents and weak-recovery thresholds for Gaussian index models."""

__version__ = "0.1.0"
