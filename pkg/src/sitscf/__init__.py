"""Counterfactual explanations for satellite image time series classifiers."""

__version__ = "0.1.0"
