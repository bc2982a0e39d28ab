"""Exact spherical nonreflecting boundary operator for time-domain Maxwell."""
__version__ = "0.1.0"
