"""LiDAR single object tracking by part-to-part motion regression."""

__version__ = "0.1.0"
