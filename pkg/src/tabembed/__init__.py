"""
tabembed - Deep embeddings for tabular click-through prediction

Learn per-field embeddings for numerical and high-cardinality categorical
features and train a feed-forward predictor on top of them.
"""

__version__ = "0.1.0"

from tabembed.api.experiment import EmbeddingExperiment

__all__ = ["EmbeddingExperiment", "__version__"]
