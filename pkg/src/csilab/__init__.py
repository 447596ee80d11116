"""Command source identification from one wearable IMU stream and per-candidate
image-plane hand velocities."""

__version__ = "0.1.0"
