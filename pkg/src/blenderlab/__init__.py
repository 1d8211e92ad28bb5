"""Numerical construction and certification of blenders for polynomial skew products."""

__version__ = "0.1.0"
