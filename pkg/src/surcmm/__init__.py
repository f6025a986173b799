"""Sparse SUR copula mixed models for multi-line loss reserving."""

__version__ = "0.1.0"
