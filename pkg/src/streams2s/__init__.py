"""Streaming speech-to-speech toolkit at desk scale."""

__version__ = "0.1.0"
