"""Assembly of per-field embeddings and the feed-forward scoring backbone."""

import hashlib
import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from tabembed.core.data_loader import FeatureSchema
from tabembed.core.diffcore import Tensor, affine, concat, count_scalars, relu, reshape, sigmoid
from tabembed.core.embed_cat import CategoricalEmbedder, CategoricalMethod, PrecomputedCache
from tabembed.core.embed_num import NumericalEmbedder, NumericalMethod
from tabembed.utils.constants import (
    DEFAULT_BACKBONE_HIDDEN,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CAT_LAYERS,
    DEFAULT_CATEGORICAL_METHOD,
    DEFAULT_DISCRETIZE_BUCKETS,
    DEFAULT_EMBED_DIM,
    DEFAULT_EXU_CAP,
    DEFAULT_HASH_FUNCTIONS,
    DEFAULT_NUM_LAYERS,
    DEFAULT_NUM_WIDTH,
    DEFAULT_NUMERICAL_METHOD,
    DEFAULT_TEMPERATURE,
)
from tabembed.utils.errors import ConfigurationError, DimensionError, SchemaError

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    """Embedding and backbone hyperparameters shared by every field."""

    methods: Dict[str, str] = field(default_factory=dict)
    d: int = DEFAULT_EMBED_DIM
    d_hat: Optional[int] = None
    layers: int = DEFAULT_NUM_LAYERS
    width: int = DEFAULT_NUM_WIDTH
    cap: float = DEFAULT_EXU_CAP
    buckets: int = DEFAULT_DISCRETIZE_BUCKETS
    temperature: float = DEFAULT_TEMPERATURE
    cat_layers: int = DEFAULT_CAT_LAYERS
    cat_width: Optional[int] = None
    hash_functions: int = DEFAULT_HASH_FUNCTIONS
    hash_buckets: Optional[int] = None
    backbone_hidden: Tuple[int, ...] = DEFAULT_BACKBONE_HIDDEN

    def method_for(self, name: str, numerical: bool) -> str:
        default = DEFAULT_NUMERICAL_METHOD if numerical else DEFAULT_CATEGORICAL_METHOD
        return self.methods.get(name, default)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["backbone_hidden"] = list(self.backbone_hidden)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "ModelConfig":
        data = dict(data)
        data["backbone_hidden"] = tuple(data.get("backbone_hidden", DEFAULT_BACKBONE_HIDDEN))
        return cls(**data)


def field_rng(seed: int, name: str) -> np.random.Generator:
    """Generator keyed by (seed, field name) so fields initialize independently of order."""
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


@dataclass
class EmbeddedRow:
    """Per-field embeddings in schema order (numerical fields first, then categorical)."""

    names: List[str]
    fields: List[Tensor]

    @property
    def widths(self) -> List[int]:
        return [t.shape[-1] for t in self.fields]

    def flat(self) -> Tensor:
        """Concatenation of every field embedding along the last axis."""
        return concat(self.fields, axis=-1)

    def matrix(self) -> np.ndarray:
        """The ``(M+N) × d`` embedding matrix; only defined when every field emits width ``d``."""
        if len(set(self.widths)) != 1:
            raise DimensionError(f"field widths differ ({self.widths}); use flat() instead")
        return np.stack([t.values for t in self.fields], axis=-2)


class BackboneParams:
    """
    Flatten-and-score network: ReLU hidden layers followed by a single-logit head.

    Args:
        d_in: Width of the flattened embedded row
        hidden: Hidden layer widths
        rng: Generator used for Glorot-uniform initialization
    """

    def __init__(
        self,
        d_in: int,
        hidden: Sequence[int] = DEFAULT_BACKBONE_HIDDEN,
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.widths = [int(d_in)] + [int(h) for h in hidden] + [1]
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(Tensor(rng.uniform(-limit, limit, (fan_out, fan_in)), tracked=True))
            self.biases.append(Tensor(np.zeros(fan_out), tracked=True))

    @property
    def d_in(self) -> int:
        return self.widths[0]

    def logits(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ConfigurationError(f"backbone expects width {self.d_in}, got {x.shape[-1]}")
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = affine(h, W, b)
            if i < last:
                h = relu(h)
        return reshape(h, h.shape[:-1])

    def parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            prefix = "output" if i == last else f"hidden{i}"
            params[f"{prefix}.weight"] = W
            params[f"{prefix}.bias"] = b
        return params

    def zero_(self) -> None:
        for t in self.parameters().values():
            t.values[...] = 0.0

    @staticmethod
    def count(d_in: int, hidden: Sequence[int] = DEFAULT_BACKBONE_HIDDEN) -> int:
        widths = [d_in, *hidden, 1]
        return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def forward(row: EmbeddedRow, params: BackboneParams) -> Tensor:
    """Probability ``sigmoid(logit)`` for an embedded row or batch of rows."""
    return sigmoid(params.logits(row.flat()))


class EmbeddingModel:
    """
    Per-field embedders plus the scoring backbone.

    Parameter names are ``num.<field>.<param>``, ``cat.<field>.<param>`` and
    ``backbone.<param>``. ``version`` is bumped by :meth:`mark_updated` after
    every optimizer step; precomputed caches compare against it.
    """

    def __init__(
        self,
        schema: FeatureSchema,
        numerical: List[NumericalEmbedder],
        categorical: List[CategoricalEmbedder],
        backbone: BackboneParams,
        config: Optional[ModelConfig] = None,
        seed: int = 0,
    ):
        self.schema = schema
        self.numerical = numerical
        self.categorical = categorical
        self.backbone = backbone
        self.config = config or ModelConfig()
        self.seed = seed
        self.version = 0
        self.caches: Dict[str, PrecomputedCache] = {}

    @classmethod
    def build(cls, schema: FeatureSchema, config: ModelConfig, seed: int = 0) -> "EmbeddingModel":
        """
        Allocate embedders for every schema field and a backbone sized to their widths.

        Raises:
            ConfigurationError: If a field is assigned a method its kind does not support
        """
        unknown = sorted(set(config.methods) - set(schema.names))
        if unknown:
            raise ConfigurationError(f"method assigned to unknown field(s): {', '.join(unknown)}", "--method")

        numerical = []
        for spec in schema.numerical:
            method = config.method_for(spec.name, numerical=True)
            if method not in {m.value for m in NumericalMethod}:
                raise ConfigurationError(
                    f"'{method}' is not a numerical method (field '{spec.name}')", "--method"
                )
            numerical.append(
                NumericalEmbedder(
                    spec.name,
                    method,
                    config.d,
                    layers=config.layers,
                    width=config.width,
                    cap=config.cap,
                    buckets=config.buckets,
                    temperature=config.temperature,
                    rng=field_rng(seed, spec.name),
                )
            )

        categorical = []
        for spec in schema.categorical:
            method = config.method_for(spec.name, numerical=False)
            if method not in {m.value for m in CategoricalMethod}:
                raise ConfigurationError(
                    f"'{method}' is not a categorical method (field '{spec.name}')", "--method"
                )
            if spec.cardinality is None:
                raise SchemaError(f"categorical field '{spec.name}' has no cardinality")
            categorical.append(
                CategoricalEmbedder(
                    spec.name,
                    method,
                    spec.cardinality,
                    config.d,
                    d_hat=config.d_hat,
                    hidden_layers=config.cat_layers,
                    width=config.cat_width,
                    cap=config.cap,
                    hash_functions=config.hash_functions,
                    hash_buckets=config.hash_buckets,
                    rng=field_rng(seed, spec.name),
                )
            )

        d_in = sum(e.output_dim for e in numerical) + sum(e.output_dim for e in categorical)
        backbone = BackboneParams(d_in, config.backbone_hidden, rng=field_rng(seed, "backbone"))
        model = cls(schema, numerical, categorical, backbone, config, seed)
        logger.debug("Built model with %d parameters", model.param_breakdown()["total"])
        return model

    # -- forward -----------------------------------------------------------

    def embed_row(
        self, numerical: np.ndarray, categorical: np.ndarray, use_cache: bool = False
    ) -> EmbeddedRow:
        """
        Embed one row (1-D inputs) or a batch (2-D inputs).

        Args:
            numerical: ``[M]`` or ``[B, M]`` normalized values
            categorical: ``[N]`` or ``[B, N]`` entity indices
            use_cache: Read deep categorical embeddings from attached precomputed caches

        Raises:
            SchemaError: If the field counts do not match the schema
        """
        numerical = np.asarray(numerical, dtype=np.float64)
        categorical = np.asarray(categorical, dtype=np.int64)
        m, n = len(self.numerical), len(self.categorical)
        if numerical.shape[-1:] != (m,) and not (m == 0 and numerical.size == 0):
            raise SchemaError(f"expected {m} numerical values, got shape {numerical.shape}")
        if categorical.shape[-1:] != (n,) and not (n == 0 and categorical.size == 0):
            raise SchemaError(f"expected {n} categorical values, got shape {categorical.shape}")

        names, tensors = [], []
        for j, embedder in enumerate(self.numerical):
            names.append(embedder.name)
            tensors.append(embedder.embed(numerical[..., j]))
        for j, embedder in enumerate(self.categorical):
            names.append(embedder.name)
            cache = self.caches.get(embedder.name) if use_cache else None
            if cache is not None:
                idx = categorical[..., j]
                rows = [cache.fetch(int(i)) for i in np.atleast_1d(idx)]
                tensors.append(Tensor(rows[0] if idx.ndim == 0 else np.stack(rows)))
            else:
                tensors.append(embedder.embed(categorical[..., j]))
        return EmbeddedRow(names, tensors)

    def forward(self, numerical: np.ndarray, categorical: np.ndarray) -> Tensor:
        return forward(self.embed_row(numerical, categorical), self.backbone)

    def predict(
        self,
        numerical: np.ndarray,
        categorical: np.ndarray,
        batch_size: int = DEFAULT_BATCH_SIZE,
        use_cache: bool = False,
    ) -> np.ndarray:
        """Probabilities for a batch, evaluated in chunks without recording a tape."""
        numerical = np.asarray(numerical, dtype=np.float64)
        categorical = np.asarray(categorical, dtype=np.int64)
        n_rows = max(len(numerical), len(categorical))
        out = np.empty(n_rows)
        for start in range(0, n_rows, batch_size):
            stop = min(start + batch_size, n_rows)
            row = self.embed_row(numerical[start:stop], categorical[start:stop], use_cache)
            out[start:stop] = forward(row, self.backbone).values
        return out

    # -- parameters --------------------------------------------------------

    def parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for e in self.numerical:
            params.update({f"num.{e.name}.{k}": t for k, t in e.parameters().items()})
        for e in self.categorical:
            params.update({f"cat.{e.name}.{k}": t for k, t in e.parameters().items()})
        params.update({f"backbone.{k}": t for k, t in self.backbone.parameters().items()})
        return params

    def field_rows(self) -> List[Dict]:
        """One accounting row per field.

        ``params`` follows the per-method formula; ``network`` is the share of it
        held by the deep transformation; ``extras`` are scorer or aggregation
        weights reported apart from the formula.
        """
        rows = []
        for kind, embedders in (("numerical", self.numerical), ("categorical", self.categorical)):
            for e in embedders:
                network = count_scalars(e.deep.parameters()) if e.deep is not None else 0
                rows.append(
                    {
                        "field": e.name,
                        "kind": kind,
                        "method": e.method.value,
                        "dim": e.output_dim,
                        "params": e.param_count(),
                        "table": e.param_count() - network,
                        "network": network,
                        "extras": e.extra_param_count(),
                    }
                )
        return rows

    def param_breakdown(self) -> Dict[str, int]:
        """Parameter totals per component; ``total`` equals the allocated tracked scalars."""
        rows = self.field_rows()
        numerical = sum(r["params"] for r in rows if r["kind"] == "numerical")
        categorical = sum(r["params"] for r in rows if r["kind"] == "categorical")
        extras = sum(r["extras"] for r in rows)
        backbone = BackboneParams.count(self.backbone.d_in, self.backbone.widths[1:-1])
        return {
            "numerical": numerical,
            "categorical": categorical,
            "extras": extras,
            "backbone": backbone,
            "embedding": numerical + categorical + extras,
            "total": numerical + categorical + extras + backbone,
        }

    def allocated(self) -> int:
        return count_scalars(self.parameters())

    def mark_updated(self) -> None:
        """Bump the parameter-version stamp after an in-place update."""
        self.version += 1
        for e in self.categorical:
            e.version = self.version

    def digest(self) -> str:
        """SHA-256 over parameter names and raw values."""
        h = hashlib.sha256()
        for name, t in sorted(self.parameters().items()):
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(t.values, dtype="<f8").tobytes())
        return h.hexdigest()

    def get_state(self) -> Dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self.parameters().items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        """Copy parameter values in place; names and shapes must match exactly."""
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        if missing:
            raise ConfigurationError(f"state is missing parameters: {', '.join(missing[:5])}")
        for name, t in params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != t.shape:
                raise ConfigurationError(f"parameter '{name}' has shape {values.shape}, expected {t.shape}")
            t.values[...] = values
        self.mark_updated()

    def embedder(self, name: str):
        for e in [*self.numerical, *self.categorical]:
            if e.name == name:
                return e
        raise SchemaError(f"Unknown field '{name}'. Available fields: {', '.join(self.schema.names)}")


def embed_row(
    numerical: np.ndarray, categorical: np.ndarray, model: EmbeddingModel
) -> EmbeddedRow:
    """Embed raw field values with each field's configured method."""
    return model.embed_row(numerical, categorical)
