"""Desk-scale simulator of an IR environment-scanning robot module."""

__version__ = "0.1.0"
