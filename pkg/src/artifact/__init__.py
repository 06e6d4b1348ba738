"""Sparse bases for convex losses over a grid, calibrated multiaccurate
statistic predictors, and a synthetic experiment harness around them."""

__version__ = "0.1.0"
