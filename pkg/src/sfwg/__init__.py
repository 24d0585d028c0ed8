"""Stabilizer-free weak Galerkin finite elements for 2D elliptic problems."""

__version__ = "0.1.0"
