"""Adaptive estimation of system and observation noise covariances inside
Kalman and ensemble Kalman filters."""
__version__ = "0.1.0"
