"""Bounded-precision RoPE transformer evaluation with circuit-depth accounting."""

__version__ = "0.1.0"
