"""Hierarchical Gabor receptive-field features and coarse-to-fine key-point search."""

__version__ = "0.1.0"
