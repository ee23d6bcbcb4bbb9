"""Adversarial segmentation with an explorable style manifold."""

__version__ = "0.1.0"
