"""Monaural source separation with deep recurrent networks and joint soft masking."""

__version__ = "0.1.0"
