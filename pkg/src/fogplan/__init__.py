"""Simulation and provisioning toolkit for placing services on fog nodes."""

__version__ = "0.1.0"
