"""Weakly supervised off-road segmentation with an active-learning loop."""

__version__ = "0.1.0"
