"""Clustering Gaussian mixtures through sum-of-squares subspace rounding."""

__version__ = "0.1.0"
