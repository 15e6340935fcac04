"""Hierarchical generative models for part-based 2-D object layouts."""

__version__ = "0.1.0"
