"""Collaborative filtering with spectral-coherence item similarity."""
__version__ = "0.1.0"
