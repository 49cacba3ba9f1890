"""Adaptive scenario partitioning for chance-constrained programs with finite support."""
__version__ = "0.1.0"
