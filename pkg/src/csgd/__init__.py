"""Decentralized consensus SGD with stragglers: simulator and analysis tools."""

__version__ = "0.1.0"
