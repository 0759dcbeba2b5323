"""Cylindrical K-function and Poisson line cluster point processes."""

__version__ = "0.1.0"
