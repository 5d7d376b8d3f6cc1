"""Stationary points of the random spherically constrained least-squares loss."""

__version__ = "0.1.0"
