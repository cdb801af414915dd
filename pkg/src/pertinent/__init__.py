"""Contrastive explanations (pertinent positives and negatives) for query-only classifiers."""

__version__ = "0.1.0"
