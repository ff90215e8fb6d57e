"""Krylov-sequence reduced-order models for linear parabolic problems."""

__version__ = "0.1.0"
