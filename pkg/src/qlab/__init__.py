"""Offline fitted Q iteration on cart-pole and Q-function discontinuity diagnostics."""

__version__ = "0.1.0"
