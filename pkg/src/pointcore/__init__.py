"""Point cloud anomaly detection with a single bound coordinate/feature memory bank."""

__version__ = "0.1.0"
