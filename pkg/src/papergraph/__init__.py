"""Hierarchical document graphs, weak retrieval labels, and an attention
network that picks the passages worth keeping in a feedback prompt."""

__version__ = "0.1.0"
