"""Core modules for tabembed."""

from tabembed.core.config import RunConfig
from tabembed.core.data_loader import Dataset, FeatureSchema, FieldSpec, load_csv, normalize, split
from tabembed.core.embed_cat import CategoricalEmbedder, CategoricalMethod
from tabembed.core.embed_num import NumericalEmbedder, NumericalMethod
from tabembed.core.model import EmbeddingModel, ModelConfig
from tabembed.core.trainer import TrainReport, compare, sweep, train_model

__all__ = [
    "RunConfig",
    "Dataset",
    "FeatureSchema",
    "FieldSpec",
    "load_csv",
    "normalize",
    "split",
    "CategoricalEmbedder",
    "CategoricalMethod",
    "NumericalEmbedder",
    "NumericalMethod",
    "EmbeddingModel",
    "ModelConfig",
    "TrainReport",
    "compare",
    "sweep",
    "train_model",
]
