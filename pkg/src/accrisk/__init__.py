"""Accident risk prediction over a 5 km city grid in 15-minute intervals."""

__version__ = "0.1.0"
