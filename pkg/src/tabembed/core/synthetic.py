"""Synthetic binary classification tasks for desk-scale experiments."""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.special import expit

from tabembed.core.data_loader import Dataset, FeatureSchema, FieldSpec, write_csv
from tabembed.utils.constants import DEFAULT_LABEL_COLUMN, LABEL_NOISE, ZIPF_EXPONENT
from tabembed.utils.errors import ConfigurationError
from tabembed.utils.validators import MIN_SYNTH_ROWS, MIN_SYNTH_VOCAB

logger = logging.getLogger(__name__)

LATENT_SCALE = 2.0


def numeric_target(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Noiseless label of the numeric task: ``sin(3πx1) + 4(x2 - 0.5)² > 0.5``."""
    return (np.sin(3.0 * np.pi * x1) + 4.0 * (x2 - 0.5) ** 2 > 0.5).astype(np.float64)


def synth_numeric(n: int, seed: int, noise: float = LABEL_NOISE) -> Dataset:
    """
    Two uniform features with a label that is nonlinear in each coordinate.

    Args:
        n: Number of rows (>= 100)
        seed: Generator seed
        noise: Probability of flipping each label

    Returns:
        Unsplit, unnormalized dataset with fields ``x1``, ``x2``
    """
    if n < MIN_SYNTH_ROWS:
        raise ConfigurationError(f"synthetic tasks need n >= {MIN_SYNTH_ROWS}, got {n}", "--n")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (n, 2))
    labels = numeric_target(x[:, 0], x[:, 1])
    flip = rng.uniform(0.0, 1.0, n) < noise
    labels[flip] = 1.0 - labels[flip]

    schema = FeatureSchema(
        [FieldSpec("x1", "numerical"), FieldSpec("x2", "numerical")], DEFAULT_LABEL_COLUMN
    )
    return Dataset(schema, x, np.zeros((n, 0), dtype=np.int64), labels)


def zipf_probabilities(v: int, exponent: float = ZIPF_EXPONENT) -> np.ndarray:
    """Truncated Zipf masses ``k^-s / H`` over entities ``0..v-1`` (entity 0 most frequent)."""
    weights = np.arange(1, v + 1, dtype=np.float64) ** -exponent
    return weights / weights.sum()


def synth_categorical(
    n: int, v: int, seed: int, exponent: float = ZIPF_EXPONENT
) -> Dataset:
    """
    One power-law categorical field whose entities each carry a fixed latent score.

    Labels are Bernoulli draws of ``sigmoid(latent[entity])``, so rare tail
    entities are informative but seldom observed.

    Args:
        n: Number of rows (>= 100)
        v: Number of entities (>= 10)
        seed: Generator seed
        exponent: Zipf exponent

    Returns:
        Unsplit dataset with field ``entity`` of cardinality ``v``
    """
    if n < MIN_SYNTH_ROWS:
        raise ConfigurationError(f"synthetic tasks need n >= {MIN_SYNTH_ROWS}, got {n}", "--n")
    if v < MIN_SYNTH_VOCAB:
        raise ConfigurationError(f"categorical task needs v >= {MIN_SYNTH_VOCAB}, got {v}", "--v")
    rng = np.random.default_rng(seed)
    latent = rng.normal(0.0, LATENT_SCALE, v)
    entities = rng.choice(v, size=n, p=zipf_probabilities(v, exponent))
    labels = (rng.uniform(0.0, 1.0, n) < expit(latent[entities])).astype(np.float64)

    schema = FeatureSchema([FieldSpec("entity", "categorical", cardinality=v)], DEFAULT_LABEL_COLUMN)
    return Dataset(
        schema,
        np.zeros((n, 0)),
        entities.reshape(n, 1),
        labels,
        vocabularies={"entity": [f"e{i}" for i in range(v)]},
    )


def make_synthetic(task: str, n: int, v: int, seed: int) -> Dataset:
    if task == "numeric":
        return synth_numeric(n, seed)
    if task == "categorical":
        return synth_categorical(n, v, seed)
    raise ConfigurationError(f"unknown synthetic task '{task}'", "--synth")


def export_synthetic(
    dataset: Dataset, out_dir: Union[str, Path], stem: str
) -> Tuple[Path, Path]:
    """Write ``<stem>.csv`` and a matching ``<stem>.schema`` file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    schema_path = out_dir / f"{stem}.schema"
    write_csv(dataset, csv_path)
    # cardinality is re-derived from the data on load
    plain = FeatureSchema(
        [FieldSpec(f.name, f.kind, None, f.normalization) for f in dataset.schema.fields],
        dataset.schema.label,
    )
    schema_path.write_text(plain.to_text(), encoding="utf-8")
    logger.info("Wrote %d rows to %s", dataset.n_rows, csv_path)
    return csv_path, schema_path
