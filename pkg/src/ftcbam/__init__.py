"""Frequency/temporal convolutional attention for speaker verification."""

__version__ = "0.1.0"
