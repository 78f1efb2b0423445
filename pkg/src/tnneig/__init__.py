"""Tensor-network eigensolver for separable high-dimensional eigenvalue problems."""

__version__ = "0.1.0"
