"""Hyperparameter tuning with adaptive resampling and futility analysis."""

__version__ = "0.1.0"
