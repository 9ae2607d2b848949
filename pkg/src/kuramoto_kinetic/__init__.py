"""Simulation and verification toolkit for the Kuramoto model and its kinetic limit."""
__version__ = "0.1.0"
