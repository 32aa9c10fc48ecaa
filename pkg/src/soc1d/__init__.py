"""Spin-orbit coupling and electron pairing in oxide-interface waveguides."""

__version__ = "0.1.0"
