"""Fuzzy-stochastic multiscale modelling of a one-dimensional fiber-composite bar."""

__version__ = "0.1.0"
