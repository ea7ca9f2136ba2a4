"""zsim: zero-copy data-pipeline engine and memory-substrate simulator."""

__version__ = "0.1.0"
