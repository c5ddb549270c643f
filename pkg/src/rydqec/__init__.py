"""Threshold estimates for neutral-atom toric codes from pulse-level noise."""

__version__ = "0.1.0"
