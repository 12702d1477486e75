"""Numerical laboratory for traveling fronts of stochastically forced
neural field equations."""

__version__ = "0.1.0"
