"""Python API for tabembed."""

from tabembed.api.experiment import EmbeddingExperiment, precompute, verify_table

__all__ = ["EmbeddingExperiment", "precompute", "verify_table"]
