"""Multi-time quantum processes: process tensors, instruments and memory strength."""

__version__ = "0.1.0"
