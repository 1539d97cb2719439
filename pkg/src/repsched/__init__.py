"""Repetend-based schedule search for pipelined multi-device workloads."""

__version__ = "0.1.0"
