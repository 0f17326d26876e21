"""Interlaced mechanical metastructures: geometry, frame-element dynamics and
attention-based forward/inverse surrogate models."""

__version__ = "0.1.0"
