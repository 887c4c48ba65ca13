"""Optimal learning and inversion of an unknown group unitary from N examples."""
__version__ = "0.1.0"
