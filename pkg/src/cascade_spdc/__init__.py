"""Spectral and polarization simulator for cascaded SPDC photon-pair sources."""

__version__ = "0.1.0"
