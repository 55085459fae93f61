"""Differentiable allophone graphs for phone recognition from phoneme supervision."""
__version__ = "0.1.0"
