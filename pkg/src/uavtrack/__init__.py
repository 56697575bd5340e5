"""Monocular target tracking: UKF with online process-noise estimation and feedforward IBVS."""

__version__ = "0.1.0"
