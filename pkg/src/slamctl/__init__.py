"""Vision-based hybrid task-space control of a 6-DOF arm with a SLAM_n(3) observer."""

__version__ = "0.1.0"
