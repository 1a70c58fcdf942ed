"""Sparsifying basis transformations of multimode-fibre transmission matrices."""

__version__ = "0.1.0"
