"""Simulated reasoning kernel: semantic slicing, tiered context memory, interrupts, scheduling, and multi-agent sync."""

__version__ = "0.1.0"
