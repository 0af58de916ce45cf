"""Event boundary detection from dense pairwise difference maps.

The package synthesises small labelled videos, trains a two-branch
attention model on clips sampled around candidate positions, and evaluates
detected boundaries against ground truth under relative-distance matching.
Everything runs on CPU over float64 numpy arrays with a small built-in
reverse-mode autodiff engine, and every pipeline stage is deterministic
given its seed.
"""

__version__ = "0.1.0"
