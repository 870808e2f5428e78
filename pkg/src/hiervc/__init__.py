"""Hierarchical probabilistic predictive video coding on a numpy engine."""
__version__ = "0.1.0"
