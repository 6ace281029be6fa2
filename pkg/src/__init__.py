"""Signed-graphon opinion dynamics: sampling, simulation and error bounds."""

__version__ = "1.0.1"
