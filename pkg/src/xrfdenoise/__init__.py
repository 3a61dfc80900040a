"""Poisson dictionary-learning restoration of fast macro-XRF scans."""

__version__ = "0.1.0"
