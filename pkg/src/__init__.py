"""Partial-KB entity linking bench."""

__version__ = "0.1.0"
