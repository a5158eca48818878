"""Globally optimal joint beamforming and antenna selection with learned node pruning."""

__version__ = "0.1.0"
