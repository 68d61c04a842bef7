"""Multivariate long-range dependence toolkit: simulation, normalization, limit checks."""

__version__ = "0.3.0"
