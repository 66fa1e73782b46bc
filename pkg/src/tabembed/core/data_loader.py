"""Dataset ingestion, normalization and splitting."""

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from tabembed.utils.constants import (
    DEFAULT_LABEL_COLUMN,
    DEFAULT_NORMALIZATION,
    MIN_SPLIT_ROWS,
    SPLIT_RATIOS,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VAL,
)
from tabembed.utils.errors import DataError, SchemaError
from tabembed.utils.validators import SchemaValidator

logger = logging.getLogger(__name__)

NUMERICAL = "numerical"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FieldSpec:
    """One input column of the feature schema."""

    name: str
    kind: str
    cardinality: Optional[int] = None
    normalization: str = DEFAULT_NORMALIZATION

    @property
    def is_numerical(self) -> bool:
        return self.kind == NUMERICAL


@dataclass
class FeatureSchema:
    """Ordered description of the numerical and categorical fields plus the label column."""

    fields: List[FieldSpec]
    label: str = DEFAULT_LABEL_COLUMN

    def __post_init__(self):
        is_valid, errors = SchemaValidator.validate_schema(self)
        if not is_valid:
            raise SchemaError("Invalid schema:\n" + "\n".join(f"  - {e}" for e in errors))

    @property
    def numerical(self) -> List[FieldSpec]:
        return [f for f in self.fields if f.kind == NUMERICAL]

    @property
    def categorical(self) -> List[FieldSpec]:
        return [f for f in self.fields if f.kind == CATEGORICAL]

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.fields]

    def field(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise SchemaError(f"Unknown field '{name}'. Available fields: {', '.join(self.names)}")

    def with_cardinalities(self, cardinalities: Dict[str, int]) -> "FeatureSchema":
        fields = [
            replace(f, cardinality=cardinalities[f.name]) if f.name in cardinalities else f
            for f in self.fields
        ]
        return FeatureSchema(fields, self.label)

    def to_dict(self) -> Dict:
        return {
            "label": self.label,
            "fields": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    "cardinality": f.cardinality,
                    "normalization": f.normalization,
                }
                for f in self.fields
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "FeatureSchema":
        return cls([FieldSpec(**f) for f in data["fields"]], data.get("label", DEFAULT_LABEL_COLUMN))

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "FeatureSchema":
        """
        Parse a key-value schema file.

        Each non-comment line is ``name = kind[, option]`` where the option is a
        normalization (``minmax``/``zscore``) for numerical fields or a
        cardinality for categorical ones; ``label = <column>`` names the label.
        """
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            raise SchemaError(f"Schema file not found: {path}") from None

        fields: List[FieldSpec] = []
        label = DEFAULT_LABEL_COLUMN
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'name = kind', got '{raw}'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "label":
                label = value
                continue
            parts = [p.strip() for p in value.split(",")]
            kind = parts[0]
            option = parts[1] if len(parts) > 1 else None
            if kind == NUMERICAL:
                fields.append(FieldSpec(key, kind, normalization=option or DEFAULT_NORMALIZATION))
            elif kind == CATEGORICAL:
                if option is not None and not option.isdigit():
                    raise SchemaError(f"{path}:{lineno}: cardinality must be an integer")
                fields.append(FieldSpec(key, kind, int(option) if option else None))
            else:
                raise SchemaError(f"{path}:{lineno}: unknown kind '{kind}'")
        return cls(fields, label)

    def to_text(self) -> str:
        lines = [f"label = {self.label}"]
        for f in self.fields:
            if f.is_numerical:
                lines.append(f"{f.name} = {f.kind}, {f.normalization}")
            elif f.cardinality is not None:
                lines.append(f"{f.name} = {f.kind}, {f.cardinality}")
            else:
                lines.append(f"{f.name} = {f.kind}")
        return "\n".join(lines) + "\n"


@dataclass
class NormalizationStats:
    """Per-field location and scale computed on the training split."""

    kinds: List[str]
    loc: np.ndarray
    scale: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        safe = np.where(self.scale > 0, self.scale, 1.0)
        out = np.where(self.scale > 0, (values - self.loc) / safe, 0.0)
        minmax = np.array([k == "minmax" for k in self.kinds], dtype=bool)
        if minmax.any():
            out[:, minmax] = np.clip(out[:, minmax], 0.0, 1.0)
        return out

    def to_dict(self) -> Dict:
        return {"kinds": self.kinds, "loc": self.loc.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "NormalizationStats":
        return cls(list(data["kinds"]), np.array(data["loc"]), np.array(data["scale"]))


@dataclass
class Dataset:
    """Row-major table of numerical values, categorical indices and binary labels."""

    schema: FeatureSchema
    numerical: np.ndarray
    categorical: np.ndarray
    labels: np.ndarray
    split: Optional[np.ndarray] = None
    vocabularies: Dict[str, List[str]] = field(default_factory=dict)
    stats: Optional[NormalizationStats] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.numerical = self._columns(self.numerical, np.float64, len(self.schema.numerical), NUMERICAL)
        self.categorical = self._columns(
            self.categorical, np.int64, len(self.schema.categorical), CATEGORICAL
        )

    def _columns(self, values, dtype, width: int, kind: str) -> np.ndarray:
        arr = np.asarray(values, dtype=dtype)
        try:
            return arr.reshape(len(self.labels), width)
        except ValueError:
            raise SchemaError(
                f"{kind} values of shape {arr.shape} do not fit {len(self.labels)} rows "
                f"x {width} {kind} fields"
            ) from None

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return self.n_rows

    def take(self, index: np.ndarray) -> "Dataset":
        return replace(
            self,
            numerical=self.numerical[index],
            categorical=self.categorical[index],
            labels=self.labels[index],
            split=None if self.split is None else self.split[index],
        )

    def subset(self, tag: str) -> "Dataset":
        """Rows of one split; an unsplit dataset is entirely training data."""
        if self.split is None:
            return self if tag == SPLIT_TRAIN else self.take(np.zeros(self.n_rows, dtype=bool))
        return self.take(self.split == tag)

    def split_sizes(self) -> Dict[str, int]:
        return {tag: len(self.subset(tag)) for tag in (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST)}

    def category_counts(self, name: str) -> np.ndarray:
        """Entity frequencies of a categorical field on the training split."""
        j = [f.name for f in self.schema.categorical].index(name)
        v = self.schema.categorical[j].cardinality
        train = self.subset(SPLIT_TRAIN).categorical[:, j]
        return np.bincount(train[train < v], minlength=v)


@dataclass
class DataSummary:
    """Summary statistics for a loaded dataset."""

    n_rows: int
    n_positive: int
    n_negative: int
    positive_rate: float
    numerical_fields: List[str]
    categorical_fields: Dict[str, int]
    split_sizes: Dict[str, int]

    @classmethod
    def of(cls, dataset: Dataset) -> "DataSummary":
        n_pos = int(dataset.labels.sum())
        return cls(
            n_rows=dataset.n_rows,
            n_positive=n_pos,
            n_negative=dataset.n_rows - n_pos,
            positive_rate=n_pos / dataset.n_rows if dataset.n_rows else 0.0,
            numerical_fields=[f.name for f in dataset.schema.numerical],
            categorical_fields={f.name: f.cardinality for f in dataset.schema.categorical},
            split_sizes=dataset.split_sizes(),
        )


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def split_tags(n: int, seed: int) -> np.ndarray:
    """Seeded 8:1:1 assignment; rounding remainder goes to the training split."""
    if n < MIN_SPLIT_ROWS:
        raise DataError(f"Need at least {MIN_SPLIT_ROWS} rows to split, got {n}")
    total = sum(SPLIT_RATIOS)
    n_val = n * SPLIT_RATIOS[1] // total
    n_test = n * SPLIT_RATIOS[2] // total
    order = np.random.default_rng(seed).permutation(n)
    tags = np.full(n, SPLIT_TRAIN, dtype=object)
    tags[order[:n_val]] = SPLIT_VAL
    tags[order[n_val : n_val + n_test]] = SPLIT_TEST
    return tags


def split(dataset: Dataset, seed: int) -> Dataset:
    return replace(dataset, split=split_tags(dataset.n_rows, seed))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def fit_normalization(dataset: Dataset) -> NormalizationStats:
    """Min-max or population z-score statistics from the training split only."""
    train = dataset.subset(SPLIT_TRAIN).numerical
    kinds = [f.normalization for f in dataset.schema.numerical]
    m = len(kinds)
    if m == 0:
        return NormalizationStats(kinds, np.zeros(0), np.zeros(0))
    if len(train) == 0:
        raise DataError("Cannot fit normalization on an empty training split")
    lo, hi = train.min(axis=0), train.max(axis=0)
    mu, sd = train.mean(axis=0), train.std(axis=0)
    zscore = np.array([k == "zscore" for k in kinds], dtype=bool)
    loc = np.where(zscore, mu, lo)
    scale = np.where(zscore, sd, hi - lo)
    return NormalizationStats(kinds, loc, scale)


def normalize(dataset: Dataset, stats: Optional[NormalizationStats] = None) -> Dataset:
    """Normalize numerical columns with training-split statistics.

    Constant (or zero-variance) columns map to 0; min-max outputs are clipped
    to ``[0, 1]`` for rows outside the training range.
    """
    stats = stats if stats is not None else fit_normalization(dataset)
    if not stats.kinds:
        return replace(dataset, stats=stats)
    return replace(dataset, numerical=stats.apply(dataset.numerical), stats=stats)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _first_bad_line(mask: pd.Series) -> int:
    # header is line 1, first data row is line 2
    return int(np.flatnonzero(mask.to_numpy())[0]) + 2


def load_csv(
    path: Union[str, Path], schema: FeatureSchema, seed: Optional[int] = None
) -> Dataset:
    """
    Load a CSV file against a feature schema.

    Categorical strings are indexed by first appearance on the training split
    (all rows when ``seed`` is None); values unseen there map to the reserved
    out-of-vocabulary index ``v``.

    Args:
        path: UTF-8, comma-separated file with a header row and no quoting
        schema: Feature schema naming the columns to read
        seed: Split seed; when given the 8:1:1 split is assigned before indexing

    Returns:
        Parsed (unnormalized) dataset

    Raises:
        SchemaError: If a schema column is missing
        DataError: If a value cannot be parsed (message names the line)
    """
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            encoding="utf-8",
        )
    except FileNotFoundError:
        raise DataError(f"File not found: {path}") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"Error reading CSV file: {e}") from None

    required = [schema.label] + schema.names
    is_valid, errors = SchemaValidator.validate_columns(list(frame.columns), required)
    if not is_valid:
        raise SchemaError("Data does not match schema:\n" + "\n".join(f"  - {e}" for e in errors))

    quoted = frame[required].apply(lambda col: col.str.contains('"', regex=False)).any(axis=1)
    if quoted.any():
        raise DataError(
            f"Quoted values are not supported (line {_first_bad_line(quoted)})",
            line=_first_bad_line(quoted),
        )

    labels = SchemaValidator.encode_label(frame[schema.label])
    if labels.isna().any():
        line = _first_bad_line(labels.isna())
        raise DataError(f"Unrecognized label in column '{schema.label}' on line {line}", line=line)

    numerical = np.zeros((len(frame), len(schema.numerical)))
    for j, spec in enumerate(schema.numerical):
        values = pd.to_numeric(frame[spec.name].str.strip(), errors="coerce")
        bad = values.isna() | ~np.isfinite(values.fillna(0.0))
        if bad.any():
            line = _first_bad_line(bad)
            raise DataError(
                f"Malformed numeric value in column '{spec.name}' on line {line}", line=line
            )
        numerical[:, j] = values.to_numpy(dtype=np.float64)

    tags = split_tags(len(frame), seed) if seed is not None else None
    train_mask = np.ones(len(frame), dtype=bool) if tags is None else tags == SPLIT_TRAIN

    categorical = np.zeros((len(frame), len(schema.categorical)), dtype=np.int64)
    vocabularies: Dict[str, List[str]] = {}
    cardinalities: Dict[str, int] = {}
    for j, spec in enumerate(schema.categorical):
        column = frame[spec.name]
        vocab = list(pd.unique(column[train_mask]))
        if len(vocab) < 2:
            raise SchemaError(
                f"Categorical field '{spec.name}' has fewer than 2 distinct training values"
            )
        lookup = {value: i for i, value in enumerate(vocab)}
        v = len(vocab)
        codes = column.map(lookup)
        n_unseen = int(codes.isna().sum())
        if n_unseen:
            logger.warning("%d unseen values of '%s' mapped to OOV index %d", n_unseen, spec.name, v)
        categorical[:, j] = codes.fillna(v).to_numpy(dtype=np.int64)
        vocabularies[spec.name] = vocab
        cardinalities[spec.name] = v

    return Dataset(
        schema=schema.with_cardinalities(cardinalities),
        numerical=numerical,
        categorical=categorical,
        labels=labels.to_numpy(dtype=np.float64),
        split=tags,
        vocabularies=vocabularies,
    )


def write_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    """Write a dataset as CSV (categorical columns as their vocabulary strings or indices)."""
    columns: Dict[str, np.ndarray] = {}
    for j, spec in enumerate(dataset.schema.numerical):
        columns[spec.name] = dataset.numerical[:, j]
    for j, spec in enumerate(dataset.schema.categorical):
        codes = dataset.categorical[:, j]
        vocab = dataset.vocabularies.get(spec.name)
        columns[spec.name] = np.array(vocab, dtype=object)[codes] if vocab else codes
    columns[dataset.schema.label] = dataset.labels.astype(np.int64)
    frame = pd.DataFrame(columns)[dataset.schema.names + [dataset.schema.label]]
    frame.to_csv(path, index=False, float_format="%.17g")


def summarize(dataset: Dataset) -> Tuple[DataSummary, List[str]]:
    """Summary plus human-readable warnings about label balance."""
    summary = DataSummary.of(dataset)
    warnings = []
    if summary.n_positive == 0 or summary.n_negative == 0:
        warnings.append("labels contain a single class; AUC will be undefined")
    return summary, warnings
