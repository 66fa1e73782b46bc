"""Categorical feature embedding: deep factorization, encodings, lookup and hashing."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from tabembed.core.diffcore import Tensor, concat, softmax, take_rows, weighted_sum
from tabembed.core.layers import ExUNetwork
from tabembed.utils.constants import (
    DEFAULT_CAT_LAYERS,
    DEFAULT_EXU_CAP,
    DEFAULT_HASH_BUCKET_FRACTION,
    DEFAULT_HASH_FUNCTIONS,
)
from tabembed.utils.errors import ConfigurationError, OutOfVocabularyError

logger = logging.getLogger(__name__)

Indices = Union[int, np.ndarray]


class CategoricalMethod(str, Enum):
    ONEHOT = "onehot"
    BINARY = "binary"
    LOOKUP = "lookup"
    HASHING = "hashing"
    DEEP = "deep"

    @classmethod
    def parse(cls, value: Union[str, "CategoricalMethod"]) -> "CategoricalMethod":
        try:
            return cls(value)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigurationError(
                f"unknown categorical method '{value}' (choose from {choices})", field="--method"
            ) from None


def default_id_dim(d: int) -> int:
    return max(2, d // 8)


def default_hash_buckets(v: int) -> int:
    return max(1, -(-v // DEFAULT_HASH_BUCKET_FRACTION))


def binary_width(v: int) -> int:
    """``max(1, ceil(log2 v))``: enough base-2 digits for indices ``0..v-1``."""
    return max(1, (v - 1).bit_length())


def check_index(x: Indices, v: int) -> np.ndarray:
    """Validate entity indices; ``v`` itself is the reserved out-of-vocabulary index."""
    idx = np.asarray(x)
    if idx.size and (not np.issubdtype(idx.dtype, np.integer) or idx.min() < 0 or idx.max() > v):
        raise OutOfVocabularyError(f"entity index outside 0..{v - 1} (reserved OOV index {v})")
    return idx.astype(np.int64)


# ---------------------------------------------------------------------------
# Parameter-free encodings
# ---------------------------------------------------------------------------


def onehot(x: Indices, v: int) -> Tensor:
    """Length-``v`` indicator; the reserved OOV index encodes as all zeros."""
    idx = check_index(x, v)
    out = np.zeros(idx.shape + (v + 1,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return Tensor(out[..., :v])


def binary_code(x: Indices, v: int) -> Tensor:
    """
    Base-2 digits (most significant first) over ``binary_width(v)`` positions.

    The reserved OOV index ``v`` keeps its own digits when they fit the width.
    When ``v`` is a power of two every digit pattern belongs to an entity, so
    OOV encodes as all ``0.5`` instead.
    """
    idx = check_index(x, v)
    width = binary_width(v)
    shifts = np.arange(width - 1, -1, -1)
    digits = ((idx[..., None] >> shifts) & 1).astype(np.float64)
    if v == 1 << width:
        digits = np.where((idx == v)[..., None], 0.5, digits)
    return Tensor(digits)


# ---------------------------------------------------------------------------
# Lookup tables
# ---------------------------------------------------------------------------


@dataclass
class LookupTable:
    """Learned ``v × dim`` table plus an untracked all-zero row for the OOV index."""

    entries: Tensor
    oov_row: Tensor

    @classmethod
    def init(cls, v: int, dim: int, rng: np.random.Generator) -> "LookupTable":
        return cls(
            entries=Tensor(rng.normal(0.0, 1.0 / np.sqrt(dim), (v, dim)), tracked=True),
            oov_row=Tensor(np.zeros((1, dim))),
        )

    @property
    def cardinality(self) -> int:
        return self.entries.shape[0]

    def lookup(self, x: Indices) -> Tensor:
        idx = check_index(x, self.cardinality)
        return take_rows(concat([self.entries, self.oov_row], axis=0), idx)


class IdTable(LookupTable):
    """Compact table of entity identification vectors ``E[v × d_hat]``."""

    @property
    def id_dim(self) -> int:
        return self.entries.shape[1]


def identify(x: Indices, table: IdTable) -> Tensor:
    """Identification vector(s) of entity ``x``."""
    return table.lookup(x)


# ---------------------------------------------------------------------------
# Deep factorization
# ---------------------------------------------------------------------------


class CatDeepParams(ExUNetwork):
    """Shared FFN ``d_hat -> width (ExU) ... -> d`` with a plain affine output layer."""

    def __init__(
        self,
        d_hat: int,
        d: int,
        hidden_layers: int = DEFAULT_CAT_LAYERS,
        width: Optional[int] = None,
        cap: float = DEFAULT_EXU_CAP,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__(
            self.layer_widths(d_hat, d, hidden_layers, width),
            cap=cap,
            activate_last=False,
            rng=rng,
        )

    @staticmethod
    def layer_widths(d_hat: int, d: int, hidden_layers: int, width: Optional[int]) -> List[int]:
        if hidden_layers < 0:
            raise ConfigurationError("hidden layer count must be >= 0", field="--cat-layers")
        width = d if width is None else width
        return [d_hat] + [width] * hidden_layers + [d]


def deep_transform_cat(xhat: Tensor, params: CatDeepParams) -> Tensor:
    if xhat.shape[-1] != params.d_in:
        raise ConfigurationError(
            f"categorical transformation expects width {params.d_in}, got {xhat.shape[-1]}"
        )
    return params.forward(xhat)


# ---------------------------------------------------------------------------
# Hashing
# ---------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def hash_bucket(x: Indices, seed: int, buckets: int) -> np.ndarray:
    """Seeded 64-bit mix of the entity index, reduced modulo ``buckets``."""
    with np.errstate(over="ignore"):
        z = np.asarray(x).astype(np.uint64) + np.uint64(seed) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return (z % np.uint64(buckets)).astype(np.int64)


@dataclass
class HashingConfig:
    """``k`` hashed ``v_hat × d`` tables aggregated with learned softmax weights."""

    k: int
    bucket_count: int
    tables: List[Tensor]
    agg_weights: Tensor
    seeds: Tuple[int, ...]

    @classmethod
    def init(
        cls, k: int, bucket_count: int, d: int, seeds: Sequence[int], rng: np.random.Generator
    ) -> "HashingConfig":
        if k < 1 or bucket_count < 1:
            raise ConfigurationError(f"hashing needs k >= 1 and v_hat >= 1, got {k}, {bucket_count}")
        tables = [
            Tensor(rng.normal(0.0, 1.0 / np.sqrt(d), (bucket_count, d)), tracked=True)
            for _ in range(k)
        ]
        return cls(k, bucket_count, tables, Tensor(np.zeros(k), tracked=True), tuple(seeds))

    def buckets(self, x: Indices) -> List[np.ndarray]:
        return [hash_bucket(x, s, self.bucket_count) for s in self.seeds]


def hash_embed(x: Indices, cfg: HashingConfig) -> Tensor:
    rows = [take_rows(t, b) for t, b in zip(cfg.tables, cfg.buckets(x))]
    return weighted_sum(rows, softmax(cfg.agg_weights))


# ---------------------------------------------------------------------------
# Parameter accounting
# ---------------------------------------------------------------------------


def param_count_categorical(
    method: Union[str, CategoricalMethod],
    v: int,
    d: int,
    d_hat: Optional[int] = None,
    k: int = DEFAULT_HASH_FUNCTIONS,
    v_hat: Optional[int] = None,
    ffn_config: Tuple[int, Optional[int]] = (DEFAULT_CAT_LAYERS, None),
) -> int:
    """Embedding parameters of one categorical field (aggregation weights excluded).

    Args:
        ffn_config: ``(hidden_layers, width)`` of the deep transformation
    """
    method = CategoricalMethod.parse(method)
    if method in (CategoricalMethod.ONEHOT, CategoricalMethod.BINARY):
        return 0
    if method == CategoricalMethod.LOOKUP:
        return v * d
    if method == CategoricalMethod.HASHING:
        return k * (default_hash_buckets(v) if v_hat is None else v_hat) * d
    d_hat = default_id_dim(d) if d_hat is None else d_hat
    hidden_layers, width = ffn_config
    widths = CatDeepParams.layer_widths(d_hat, d, hidden_layers, width)
    return v * d_hat + ExUNetwork.count(widths, activate_last=False)


# ---------------------------------------------------------------------------
# Field embedder
# ---------------------------------------------------------------------------


class CategoricalEmbedder:
    """
    Embedding function for one categorical field.

    Args:
        name: Field name
        method: Embedding method
        cardinality: Vocabulary size ``v`` (index ``v`` is the reserved OOV entity)
        d: Embedding size
        d_hat: Identification vector size for the deep method (default ``max(2, d // 8)``)
        hidden_layers: Hidden ExU layers of the deep transformation
        width: Hidden width of the deep transformation (default ``d``)
        cap: ExU cap
        hash_functions: Number of hash functions ``k``
        hash_buckets: Buckets per hashed table ``v_hat`` (default ``ceil(v / 4)``)
        hash_seeds: Explicit hash seeds; drawn from ``rng`` when omitted
        rng: Generator for parameter initialization
    """

    def __init__(
        self,
        name: str,
        method: Union[str, CategoricalMethod],
        cardinality: int,
        d: int,
        d_hat: Optional[int] = None,
        hidden_layers: int = DEFAULT_CAT_LAYERS,
        width: Optional[int] = None,
        cap: float = DEFAULT_EXU_CAP,
        hash_functions: int = DEFAULT_HASH_FUNCTIONS,
        hash_buckets: Optional[int] = None,
        hash_seeds: Optional[Sequence[int]] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.name = name
        self.method = CategoricalMethod.parse(method)
        self.cardinality = int(cardinality)
        self.d = d
        self.d_hat = default_id_dim(d) if d_hat is None else d_hat
        self.hidden_layers = hidden_layers
        self.width = width
        self.hash_functions = hash_functions
        self.hash_buckets = default_hash_buckets(self.cardinality) if hash_buckets is None else hash_buckets
        self.version = 0
        rng = rng if rng is not None else np.random.default_rng(0)

        self.table: Optional[LookupTable] = None
        self.id_table: Optional[IdTable] = None
        self.deep: Optional[CatDeepParams] = None
        self.hashing: Optional[HashingConfig] = None

        if self.method == CategoricalMethod.LOOKUP:
            self.table = LookupTable.init(self.cardinality, d, rng)
        elif self.method == CategoricalMethod.DEEP:
            if not 1 <= self.d_hat < d:
                raise ConfigurationError(
                    f"identification size must satisfy 1 <= d_hat < d, got {self.d_hat} vs {d}",
                    field="--dhat",
                )
            self.id_table = IdTable.init(self.cardinality, self.d_hat, rng)
            self.deep = CatDeepParams(self.d_hat, d, hidden_layers, width, cap, rng)
        elif self.method == CategoricalMethod.HASHING:
            if hash_seeds is None:
                hash_seeds = rng.integers(0, 2**63, size=hash_functions, dtype=np.uint64)
            self.hashing = HashingConfig.init(
                hash_functions, self.hash_buckets, d, [int(s) for s in hash_seeds], rng
            )

    @property
    def output_dim(self) -> int:
        if self.method == CategoricalMethod.ONEHOT:
            return self.cardinality
        if self.method == CategoricalMethod.BINARY:
            return binary_width(self.cardinality)
        return self.d

    def embed(self, x: Indices) -> Tensor:
        if self.method == CategoricalMethod.ONEHOT:
            return onehot(x, self.cardinality)
        if self.method == CategoricalMethod.BINARY:
            return binary_code(x, self.cardinality)
        if self.method == CategoricalMethod.LOOKUP:
            return self.table.lookup(x)
        if self.method == CategoricalMethod.HASHING:
            check_index(x, self.cardinality)
            return hash_embed(x, self.hashing)
        return deep_transform_cat(identify(x, self.id_table), self.deep)

    def parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        if self.table is not None:
            params["table"] = self.table.entries
        if self.id_table is not None:
            params["id_table"] = self.id_table.entries
            params.update({f"deep.{k}": t for k, t in self.deep.parameters().items()})
        if self.hashing is not None:
            for t, table in enumerate(self.hashing.tables):
                params[f"hash{t}.table"] = table
            params["agg_weights"] = self.hashing.agg_weights
        return params

    def param_count(self) -> int:
        return param_count_categorical(
            self.method,
            self.cardinality,
            self.d,
            self.d_hat,
            self.hash_functions,
            self.hash_buckets,
            (self.hidden_layers, self.width),
        )

    def extra_param_count(self) -> int:
        """Hash aggregation weights, reported apart from the hashed tables."""
        return self.hash_functions if self.method == CategoricalMethod.HASHING else 0


def embed_categorical(x: Indices, embedder: CategoricalEmbedder) -> Tensor:
    """Embed entity ``x`` with the field's configured method."""
    return embedder.embed(x)


# ---------------------------------------------------------------------------
# Precomputation and caching
# ---------------------------------------------------------------------------


@dataclass
class PrecomputedCache:
    """
    Frozen deep embeddings of one field.

    ``full_table`` holds every in-vocabulary entity when built by
    :func:`precompute_table`; otherwise ``rows`` caches a subset and misses are
    computed on demand. A cache whose ``version`` differs from the embedder's is
    stale and is rebuilt on the next fetch.
    """

    embedder: CategoricalEmbedder
    version: int
    full_table: Optional[np.ndarray] = None
    rows: Dict[int, np.ndarray] = field(default_factory=dict)
    hits: int = 0
    misses: int = 0

    @property
    def field_name(self) -> str:
        return self.embedder.name

    def is_stale(self) -> bool:
        return self.version != self.embedder.version

    def refresh(self) -> None:
        logger.warning(
            "Cache for '%s' is stale (version %d, parameters at %d); recomputing",
            self.field_name,
            self.version,
            self.embedder.version,
        )
        if self.full_table is not None:
            self.full_table = _compute_rows(self.embedder, np.arange(self.embedder.cardinality))
        keys = sorted(self.rows)
        if keys:
            table = _compute_rows(self.embedder, np.array(keys))
            self.rows = {k: table[i] for i, k in enumerate(keys)}
        self.version = self.embedder.version

    def fetch(self, x: int) -> np.ndarray:
        x = int(check_index(x, self.embedder.cardinality))
        if self.is_stale():
            self.refresh()
        if self.full_table is not None and x < self.full_table.shape[0]:
            self.hits += 1
            return self.full_table[x]
        if x in self.rows:
            self.hits += 1
            return self.rows[x]
        self.misses += 1
        row = self.embedder.embed(x).values
        self.rows[x] = row
        return row

    def stats(self) -> Dict[str, int]:
        return {"hits": self.hits, "misses": self.misses, "cached_rows": self.size}

    @property
    def size(self) -> int:
        full = 0 if self.full_table is None else self.full_table.shape[0]
        return full + len(self.rows)


def _compute_rows(embedder: CategoricalEmbedder, idx: np.ndarray) -> np.ndarray:
    return embedder.embed(idx).values.copy()


def _require_deep(embedder: CategoricalEmbedder) -> None:
    if embedder.method != CategoricalMethod.DEEP:
        raise ConfigurationError(
            f"field '{embedder.name}' uses '{embedder.method.value}'; precompute needs 'deep'"
        )


def precompute_table(embedder: CategoricalEmbedder) -> PrecomputedCache:
    """Materialize the full ``v × d`` table of a deep-embedded field."""
    _require_deep(embedder)
    table = _compute_rows(embedder, np.arange(embedder.cardinality))
    return PrecomputedCache(embedder, embedder.version, full_table=table)


def cache_frequent(
    embedder: CategoricalEmbedder, counts: np.ndarray, top_k: int
) -> PrecomputedCache:
    """Precompute only the ``top_k`` most frequent entities of a deep-embedded field."""
    _require_deep(embedder)
    counts = np.asarray(counts)
    order = np.argsort(-counts, kind="stable")[:top_k]
    keys = np.sort(order)
    table = _compute_rows(embedder, keys) if keys.size else np.zeros((0, embedder.d))
    rows = {int(k): table[i] for i, k in enumerate(keys)}
    return PrecomputedCache(embedder, embedder.version, rows=rows)
