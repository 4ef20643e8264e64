"""Fairness versus attractiveness of constrained group draws."""

__version__ = "0.1.0"
