"""Certified robustness of federated image classifiers via randomized smoothing."""
from . import deform, federation, nn, smoothing

__version__ = "0.1.0"

__all__ = ["deform", "federation", "nn", "smoothing", "__version__"]
