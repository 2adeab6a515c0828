"""Galerkin NLS on the 2-torus and Monte-Carlo checks of Gaussian measure transport."""

__version__ = "0.1.0"
