"""Uncertainty-aware scheduling of language-model inference requests."""

__version__ = "0.1.0"
