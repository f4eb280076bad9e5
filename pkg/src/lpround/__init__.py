"""Approximate LP rounding via quadratic penalties and stochastic coordinate descent."""

__version__ = "0.1.0"
