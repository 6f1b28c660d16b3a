"""Riemannian classification of multichannel epochs from covariance and
functional-connectivity matrices."""

__version__ = "0.1.0"
