"""Range-image lidar odometry with scan-to-map refinement."""

__version__ = "0.1.0"
