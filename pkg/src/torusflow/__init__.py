"""Numerical lab for Gaussian measures transported by the truncated nonlinear wave flow on the torus."""

__version__ = "0.1.0"
