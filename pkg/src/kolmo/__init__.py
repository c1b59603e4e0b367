"""Numerics for the hypoelliptic Kolmogorov operator ``d/dt - Lap_y + y.grad_x``."""

__version__ = "0.1.0"
