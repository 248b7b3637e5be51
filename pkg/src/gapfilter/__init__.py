"""Optimal and minimax-robust filtering of functionals with missing observations."""
__version__ = "0.1.0"
