"""Persona-conditioned tutoring dialogue simulation with judge-based validation."""

__version__ = "0.1.0"
