"""Compact 9-point finite differences for 2D elliptic interface problems."""

__version__ = "0.1.0"
