"""Agentic research assistant for competition-law cases."""

__version__ = "0.1.0"
