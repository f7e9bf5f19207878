"""Lidar-inertial odometry with online extrinsic calibration, geometric
observability monitoring, source-switching supervision, and a synthetic
test world."""

__version__ = "0.1.0"
