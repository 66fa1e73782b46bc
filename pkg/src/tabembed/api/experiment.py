"""Main Python API for embedding experiments."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd

from tabembed.core.checkpoint import load_checkpoint, load_table, save_checkpoint, save_table
from tabembed.core.config import RunConfig
from tabembed.core.data_loader import (
    DataSummary,
    Dataset,
    FeatureSchema,
    load_csv,
    normalize,
    split,
)
from tabembed.core.embed_cat import CategoricalEmbedder, PrecomputedCache, precompute_table
from tabembed.core.model import EmbeddingModel
from tabembed.core.synthetic import export_synthetic, make_synthetic
from tabembed.core.trainer import TrainReport, compare, sweep, train_model
from tabembed.utils.constants import (
    CHECKPOINT_FILE,
    COMPARE_FILE,
    CSV_FLOAT_FORMAT,
    EPOCHS_FILE,
    PARAMS_FILE,
    REPORT_FILE,
    SWEEP_FILE,
)
from tabembed.utils.errors import ConfigurationError, SchemaError
from tabembed.utils.formatters import OutputFormatter

logger = logging.getLogger(__name__)


class EmbeddingExperiment:
    """
    High-level API for training and analysing embedding models.

    Example:
        >>> config = RunConfig.resolve({"synth": "numeric", "n": 5000})
        >>> experiment = EmbeddingExperiment(config)
        >>> experiment.load_data()
        >>> report = experiment.train()
        >>> experiment.export()
    """

    def __init__(self, config: RunConfig):
        """
        Initialize an experiment.

        Args:
            config: Validated run configuration
        """
        self.config = config

        self.dataset: Optional[Dataset] = None
        self.summary: Optional[DataSummary] = None

        # Results (populated by the run methods)
        self.report: Optional[TrainReport] = None
        self.params: Optional[pd.DataFrame] = None
        self.sweep_results: Optional[pd.DataFrame] = None
        self.compare_results: Optional[pd.DataFrame] = None

    def load_data(self) -> DataSummary:
        """
        Load (or generate), split and normalize the dataset.

        Returns:
            DataSummary with row counts, label balance and field cardinalities

        Raises:
            SchemaError: If the CSV does not match the schema
            DataError: If the data is malformed
        """
        if self.config.synth is not None:
            raw = make_synthetic(self.config.synth, self.config.n, self.config.v, self.config.seed)
            raw = split(raw, self.config.seed)
        else:
            schema = FeatureSchema.from_file(self.config.schema)
            raw = load_csv(self.config.data, schema, seed=self.config.seed)

        self.dataset = normalize(raw)
        self.summary = DataSummary.of(self.dataset)
        logger.info("Loaded %d rows (%s)", self.summary.n_rows, self.summary.split_sizes)
        return self.summary

    def _require_data(self) -> Dataset:
        if self.dataset is None:
            raise RuntimeError("Data not loaded. Call load_data() first.")
        return self.dataset

    def _schema(self) -> FeatureSchema:
        """Schema with cardinalities; read from the schema file alone when it declares them."""
        if self.dataset is not None:
            return self.dataset.schema
        if self.config.synth is None and self.config.schema is not None:
            schema = FeatureSchema.from_file(self.config.schema)
            if all(f.cardinality is not None for f in schema.categorical):
                return schema
        self.load_data()
        return self.dataset.schema

    def build_model(self, seed: Optional[int] = None) -> EmbeddingModel:
        schema = self._schema()
        seed = self.config.seed if seed is None else seed
        return EmbeddingModel.build(schema, self.config.model_config(schema), seed)

    def param_report(self) -> pd.DataFrame:
        """
        Per-field parameter accounting plus backbone and total rows.

        Returns:
            DataFrame with columns field, kind, method, dim, params, table, network, extras
        """
        model = self.build_model()
        rows = model.field_rows()
        breakdown = model.param_breakdown()
        rows.append(
            {
                "field": "backbone",
                "kind": "backbone",
                "method": "ffn",
                "dim": model.backbone.d_in,
                "params": breakdown["backbone"],
                "table": 0,
                "network": breakdown["backbone"],
                "extras": 0,
            }
        )
        rows.append(
            {
                "field": "total",
                "kind": "",
                "method": "",
                "dim": model.backbone.d_in,
                "params": breakdown["total"],
                "table": sum(r["table"] for r in rows),
                "network": sum(r["network"] for r in rows),
                "extras": breakdown["extras"],
            }
        )
        self.params = pd.DataFrame(rows)
        return self.params

    def train(self) -> TrainReport:
        """
        Train over every configured seed.

        Returns:
            TrainReport (its ``best_model`` is the run with the best validation AUC)
        """
        self.report = train_model(self._require_data(), self.config)
        return self.report

    def sweep(self, axis: str, values: Sequence[int]) -> pd.DataFrame:
        self.sweep_results = sweep(self._require_data(), self.config, axis, values)
        return self.sweep_results

    def compare(self, methods: Sequence[str]) -> pd.DataFrame:
        self.compare_results = compare(self._require_data(), self.config, methods)
        return self.compare_results

    def export(self, output_dir: Optional[str] = None) -> List[Path]:
        """
        Write every available result to ``output_dir``.

        Args:
            output_dir: Destination (default: ``config.out``)

        Returns:
            Paths written
        """
        output_path = Path(output_dir or self.config.out)
        output_path.mkdir(parents=True, exist_ok=True)
        written: List[Path] = []

        if self.report is not None:
            report_path = output_path / REPORT_FILE
            report_path.write_text(OutputFormatter.to_json(self.report.to_dict()) + "\n", encoding="utf-8")
            written.append(report_path)

            epochs_path = output_path / EPOCHS_FILE
            self.report.epochs_frame().to_csv(epochs_path, index=False, float_format=CSV_FLOAT_FORMAT)
            written.append(epochs_path)

            dataset = self._require_data()
            written.append(
                save_checkpoint(
                    self.report.best_model,
                    output_path / CHECKPOINT_FILE,
                    normalization=dataset.stats,
                    vocabularies=dataset.vocabularies,
                    run_config=self.config.to_dict(),
                )
            )

        for frame, name in (
            (self.params, PARAMS_FILE),
            (self.sweep_results, SWEEP_FILE),
            (self.compare_results, COMPARE_FILE),
        ):
            if frame is not None:
                path = output_path / name
                frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
                written.append(path)

        return written

    def export_data(self, output_dir: Optional[str] = None, stem: str = "synthetic") -> List[Path]:
        """Write the generated dataset (before normalization) as CSV plus schema file."""
        if self.config.synth is None:
            raise ConfigurationError("only synthetic tasks can be exported", "--synth")
        raw = make_synthetic(self.config.synth, self.config.n, self.config.v, self.config.seed)
        return list(export_synthetic(raw, output_dir or self.config.out, stem))

    def to_json(self) -> str:
        """
        Export all results to a JSON string.

        Returns:
            JSON string with all results
        """
        results: Dict = {}

        if self.summary is not None:
            results["data_summary"] = {
                "n_rows": self.summary.n_rows,
                "n_positive": self.summary.n_positive,
                "n_negative": self.summary.n_negative,
                "positive_rate": self.summary.positive_rate,
                "numerical_fields": self.summary.numerical_fields,
                "categorical_fields": self.summary.categorical_fields,
                "split_sizes": self.summary.split_sizes,
            }

        if self.report is not None:
            results["report"] = self.report.to_dict()

        if self.params is not None:
            results["params"] = self.params.to_dict("records")

        if self.sweep_results is not None:
            results["sweep"] = self.sweep_results.to_dict("records")

        if self.compare_results is not None:
            results["compare"] = self.compare_results.to_dict("records")

        return OutputFormatter.to_json(results)


def precompute(
    checkpoint: Union[str, Path], field: str, output: Union[str, Path]
) -> PrecomputedCache:
    """
    Materialize the full embedding table of a deep categorical field from a checkpoint.

    Args:
        checkpoint: Model checkpoint path
        field: Categorical field using the deep method
        output: Table file to write

    Returns:
        The precomputed cache (``full_table`` has one row per entity)
    """
    model = load_checkpoint(checkpoint).model
    embedder = model.embedder(field)
    if not isinstance(embedder, CategoricalEmbedder):
        raise SchemaError(f"field '{field}' is not categorical")
    cache = precompute_table(embedder)
    save_table(cache, model, output)
    return cache


def verify_table(checkpoint: Union[str, Path], table: Union[str, Path]) -> PrecomputedCache:
    """Load a precomputed table, rejecting it if the checkpoint's parameters changed."""
    return load_table(table, load_checkpoint(checkpoint).model)
