"""Decentralized multi-agent coverage on a layered communication network."""
__version__ = "0.1.0"
