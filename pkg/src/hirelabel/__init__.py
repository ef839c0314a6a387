"""Recover unobserved high-level actions from low-level logs by inverting known controllers."""

__version__ = "0.1.0"
