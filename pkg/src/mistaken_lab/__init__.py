"""Synthetic scenes, a belief oracle, and a temporal classifier for spotting
characters who hold a mistaken belief."""

__version__ = "0.1.0"
