"""Entropy production of decorrelating processes in a simulated atom-cavity cycle."""

__version__ = "0.1.0"
