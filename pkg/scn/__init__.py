"""Siamese capsule networks for pairwise face verification."""

__version__ = "1.0.0"
