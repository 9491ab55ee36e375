"""Shared-backup sizing, pooling and embedding for reliable virtual infrastructures."""

__version__ = "0.1.0"
