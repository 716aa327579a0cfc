"""Choquet regularizers for exploratory reinforcement-learning control."""

__version__ = "0.1.0"
