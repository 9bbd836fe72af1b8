"""ADMM-constrained batch iLQR for tool-affordance motion planning."""

__version__ = "0.1.0"
