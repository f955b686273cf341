"""Prompt-guided knowledge injection for small transformer protein encoders."""

__version__ = "0.1.0"
