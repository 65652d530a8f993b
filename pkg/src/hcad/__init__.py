"""Hyperbolic contrastive anomaly detection on attributed graphs."""

__version__ = "0.1.0"
