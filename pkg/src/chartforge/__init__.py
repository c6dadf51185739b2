"""Toolkit for building, rendering, and scoring non-annotated chart benchmarks."""

__version__ = "0.1.0"
