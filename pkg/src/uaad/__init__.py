"""Unsupervised absolute auditory attention decoding."""

__version__ = "0.1.0"
