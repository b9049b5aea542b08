"""Restricted lattice walks, recurrence guessing and shift-operator certification."""

__version__ = "0.1.0"
