"""Unsupervised multi-aspect labeling of review text."""

__version__ = "0.1.0"
