"""Wavelength-tunable QKD transmitter simulation."""
