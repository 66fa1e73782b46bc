"""Schema and configuration validation utilities."""

from collections import Counter
from typing import Any, List, Sequence, Tuple

import numpy as np
import pandas as pd

from tabembed.utils.constants import (
    NEGATIVE_LABEL_VALUES,
    NORMALIZATIONS,
    POSITIVE_LABEL_VALUES,
)

SYNTH_TASKS = ("numeric", "categorical")
MIN_SYNTH_ROWS = 100
MIN_SYNTH_VOCAB = 10


class SchemaValidator:
    """Validates feature schemas and CSV headers."""

    @staticmethod
    def validate_schema(schema: Any) -> Tuple[bool, List[str]]:
        """
        Validate a feature schema.

        Args:
            schema: Object with ``fields`` (name, kind, cardinality, normalization) and ``label``

        Returns:
            Tuple of (is_valid, error_messages)
        """
        errors = []

        if not schema.fields:
            errors.append("Schema has no fields. At least one feature is required.")
            return False, errors

        names = [f.name for f in schema.fields]
        duplicates = sorted(n for n, c in Counter(names).items() if c > 1)
        if duplicates:
            errors.append(f"Duplicate field names: {', '.join(duplicates)}")

        if schema.label in names:
            errors.append(f"Label column '{schema.label}' is also declared as a feature")

        for f in schema.fields:
            if f.kind not in ("numerical", "categorical"):
                errors.append(f"Field '{f.name}' has unknown kind '{f.kind}'")
            elif f.kind == "numerical" and f.normalization not in NORMALIZATIONS:
                errors.append(
                    f"Field '{f.name}' has unknown normalization '{f.normalization}' "
                    f"(choose from {', '.join(NORMALIZATIONS)})"
                )
            elif f.kind == "categorical" and f.cardinality is not None and f.cardinality < 2:
                errors.append(
                    f"Categorical field '{f.name}' needs cardinality >= 2, got {f.cardinality}"
                )

        return len(errors) == 0, errors

    @staticmethod
    def validate_columns(columns: Sequence[str], required: Sequence[str]) -> Tuple[bool, List[str]]:
        """Check that every required column is present, suggesting near matches."""
        errors = []
        available = ", ".join(columns)
        for name in required:
            if name in columns:
                continue
            error_msg = f"Missing required column '{name}'. Available columns: {available}"
            suggestion = SchemaValidator._suggest_column(name, columns)
            if suggestion:
                error_msg += f". Did you mean '{suggestion}'?"
            errors.append(error_msg)
        return len(errors) == 0, errors

    @staticmethod
    def _suggest_column(target: str, available: Sequence[str]) -> str:
        """Suggest a similar column name if available."""
        target_lower = target.lower()
        for col in available:
            if target_lower in col.lower() or col.lower() in target_lower:
                return col
        return ""

    @staticmethod
    def encode_label(series: pd.Series) -> pd.Series:
        """
        Encode a label column as 1.0 (positive) / 0.0 (negative).

        Args:
            series: Raw label strings

        Returns:
            Float series; unrecognized values are NaN
        """
        lowered = series.astype(str).str.strip().str.lower()
        encoded = pd.Series(np.nan, index=series.index)
        encoded[lowered.isin(POSITIVE_LABEL_VALUES)] = 1.0
        encoded[lowered.isin(NEGATIVE_LABEL_VALUES)] = 0.0
        return encoded


class ConfigValidator:
    """Validates run configurations; every message names the offending flag."""

    @staticmethod
    def validate_config(config: Any) -> Tuple[bool, List[str]]:
        """
        Validate a run configuration.

        Args:
            config: ``RunConfig``-like object

        Returns:
            Tuple of (is_valid, error_messages)
        """
        errors = []

        if config.data is None and config.synth is None:
            errors.append("--data: no dataset given (use --data with --schema, or --synth)")
        if config.data is not None and config.synth is not None:
            errors.append("--synth: cannot be combined with --data")
        if config.data is not None and config.schema is None:
            errors.append("--schema: a schema file is required for CSV input")
        if config.synth is not None:
            if config.synth not in SYNTH_TASKS:
                errors.append(
                    f"--synth: unknown task '{config.synth}' (choose from {', '.join(SYNTH_TASKS)})"
                )
            if config.n < MIN_SYNTH_ROWS:
                errors.append(f"--n: synthetic tasks need at least {MIN_SYNTH_ROWS} rows, got {config.n}")
            if config.synth == "categorical" and config.v < MIN_SYNTH_VOCAB:
                errors.append(f"--v: categorical task needs v >= {MIN_SYNTH_VOCAB}, got {config.v}")

        errors.extend(ConfigValidator._positive(config, "d", "--d"))
        errors.extend(ConfigValidator._positive(config, "layers", "--layers"))
        errors.extend(ConfigValidator._positive(config, "width", "--width"))
        errors.extend(ConfigValidator._positive(config, "batch", "--batch"))
        errors.extend(ConfigValidator._positive(config, "seeds", "--seeds"))
        errors.extend(ConfigValidator._positive(config, "max_epochs", "--max-epochs"))
        errors.extend(ConfigValidator._positive(config, "buckets", "--buckets"))
        errors.extend(ConfigValidator._positive(config, "hash_functions", "--hash-functions"))

        if config.d_hat is not None and not 1 <= config.d_hat < config.d:
            errors.append(f"--dhat: must satisfy 1 <= dhat < d, got {config.d_hat} with d={config.d}")
        if config.hash_buckets is not None and config.hash_buckets < 1:
            errors.append(f"--hash-buckets: must be positive, got {config.hash_buckets}")
        if not config.cap > 0:
            errors.append(f"--cap: must be positive, got {config.cap}")
        if not config.lr > 0:
            errors.append(f"--lr: must be positive, got {config.lr}")
        if not config.temperature > 0:
            errors.append(f"--temperature: must be positive, got {config.temperature}")
        if config.patience < 0:
            errors.append(f"--patience: must be >= 0, got {config.patience}")
        if config.seed < 0:
            errors.append(f"--seed: must be >= 0, got {config.seed}")

        return len(errors) == 0, errors

    @staticmethod
    def _positive(config: Any, attr: str, flag: str) -> List[str]:
        value = getattr(config, attr)
        return [] if value >= 1 else [f"{flag}: must be >= 1, got {value}"]
