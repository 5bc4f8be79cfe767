"""Hierarchical label-wise attention networks for multi-label text
classification, with label-embedding initialization and attention-based
explanations. Pure numpy; no deep-learning framework."""

__version__ = "0.1.0"
