"""Spatial modulation with reconfigurable antennas: channel, detection, simulation and bounds."""

__version__ = "0.1.0"
