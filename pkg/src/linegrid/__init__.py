"""Line segments on a cell grid: geometry, training targets, suppression and metrics."""

__version__ = "0.1.0"
