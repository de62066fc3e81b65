"""Homicide-clearance prediction with tree ensembles, penalized logistic
models and exact Shapley attributions."""

__version__ = "0.1.0"
