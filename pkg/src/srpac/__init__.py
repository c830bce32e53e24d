"""Simulation, PAC frame-count bounds and Monte-Carlo validation for interlace super-resolution."""

__version__ = "0.1.0"
