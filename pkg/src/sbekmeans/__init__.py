"""Stochastic backward Euler and baseline solvers for k-means clustering."""

__version__ = "0.1.0"
