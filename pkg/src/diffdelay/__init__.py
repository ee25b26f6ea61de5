"""Controllability analysis for multi-delay difference systems."""
__version__ = "0.1.0"
