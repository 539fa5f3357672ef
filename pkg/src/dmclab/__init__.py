"""Compressed-domain motion cues: codec simulator, DMC generator and training."""

__version__ = "0.1.0"
