"""Adaptive embedding-dimension selection for CTR models.

A learned selection layer picks a per-feature-value prefix length of its
embedding vector; masked suffixes are exact zeros, so rows compress to
variable-length records at rest. The package bundles the selection layer,
a minimal trainable CTR model with rule-based baselines, the compressed
store, evaluation metrics, and a CLI.
"""

__version__ = "0.1.0"
