"""Deterministic simulator of ultrasonic microphone jammers."""

__version__ = "0.1.0"
