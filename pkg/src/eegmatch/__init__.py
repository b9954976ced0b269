"""Sentence-level speech/EEG match-mismatch models and experiment tools."""

__version__ = "0.1.0"

from .errors import ConcurrentRunError, DataError

__all__ = ["ConcurrentRunError", "DataError", "__version__"]
