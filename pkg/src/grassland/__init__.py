"""GRASSLAND dynamic maze benchmark and the D2R reasoning harness."""

__version__ = "0.1.0"
