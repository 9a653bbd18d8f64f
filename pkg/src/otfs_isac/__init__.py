"""Delay-Doppler precoder design for OTFS-based integrated sensing and communication."""

__version__ = "0.1.0"
