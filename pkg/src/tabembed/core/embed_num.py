"""Numerical feature embedding: feature expansion, deep transformation and baselines."""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np

from tabembed.core.diffcore import Tensor, add, matmul, mul, softmax, take_rows
from tabembed.core.layers import ExUNetwork
from tabembed.utils.constants import (
    DEFAULT_DISCRETIZE_BUCKETS,
    DEFAULT_EXU_CAP,
    DEFAULT_NUM_LAYERS,
    DEFAULT_NUM_WIDTH,
    DEFAULT_TEMPERATURE,
)
from tabembed.utils.errors import ConfigurationError, DomainError, ParameterError

Scalars = Union[float, np.ndarray]


class NumericalMethod(str, Enum):
    NONE = "none"
    HANDCRAFTED = "handcrafted"
    LINEAR = "linear"
    DISCRETIZE = "discretize"
    EXPAND = "expand"
    DEEP = "deep"

    @classmethod
    def parse(cls, value: Union[str, "NumericalMethod"]) -> "NumericalMethod":
        try:
            return cls(value)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigurationError(
                f"unknown numerical method '{value}' (choose from {choices})", field="--method"
            ) from None


@dataclass
class NumExpansionParams:
    """Embedding sensitivity ``gamma`` and embedding bias ``beta``."""

    gamma: Tensor
    beta: Tensor

    @classmethod
    def init(cls, d: int) -> "NumExpansionParams":
        return cls(gamma=Tensor(np.ones(d), tracked=True), beta=Tensor(np.zeros(d), tracked=True))

    @property
    def d(self) -> int:
        return self.gamma.shape[0]


class NumDeepParams(ExUNetwork):
    """Per-field residual FFN ``d -> width -> ... -> d`` with ExU on every layer."""

    residual = True

    def __init__(
        self,
        d: int,
        layers: int = DEFAULT_NUM_LAYERS,
        width: int = DEFAULT_NUM_WIDTH,
        cap: float = DEFAULT_EXU_CAP,
        rng: Optional[np.random.Generator] = None,
    ):
        if layers < 1:
            raise ConfigurationError(f"deep transformation needs >= 1 layer, got {layers}", "--layers")
        self.layer_width = width
        super().__init__(self.layer_widths(d, layers, width), cap=cap, activate_last=True, rng=rng)

    @staticmethod
    def layer_widths(d: int, layers: int, width: int):
        return [d] + [width] * (layers - 1) + [d]


@dataclass
class DiscretizationParams:
    """Soft discretization: bucket scorer plus one meta-embedding per bucket."""

    meta_embeddings: Tensor
    scorer_weight: Tensor
    scorer_bias: Tensor
    temperature: float = DEFAULT_TEMPERATURE

    @classmethod
    def init(
        cls, v: int, d: int, temperature: float, rng: np.random.Generator
    ) -> "DiscretizationParams":
        return cls(
            meta_embeddings=Tensor(rng.normal(0.0, 1.0 / np.sqrt(d), (v, d)), tracked=True),
            scorer_weight=Tensor(rng.normal(0.0, 1.0, v), tracked=True),
            scorer_bias=Tensor(np.linspace(-1.0, 1.0, v) if v > 1 else np.zeros(v), tracked=True),
            temperature=temperature,
        )


def _as_column(x: Scalars) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64).reshape(-1, 1))


def expand(x: Scalars, params: NumExpansionParams) -> Tensor:
    """Feature expansion ``x·gamma + beta``; scalar in, vector out, batch in, matrix out."""
    x = np.asarray(x, dtype=np.float64)
    col = Tensor(x) if x.ndim == 0 else _as_column(x)
    return add(mul(col, params.gamma), params.beta)


def deep_transform_num(xhat: Tensor, params: NumDeepParams) -> Tensor:
    """Residual deep transformation ``xhat + FFN(xhat)``."""
    if xhat.shape[-1] != params.d_in or params.d_in != params.d_out:
        raise ConfigurationError(
            f"deep transformation expects width {params.d_in}, got {xhat.shape[-1]}"
        )
    return add(xhat, params.forward(xhat))


_HANDCRAFTED = (
    lambda x: x,
    lambda x: x * x,
    np.sqrt,
    np.log1p,
)


def handcrafted(x: Scalars, d: int) -> Tensor:
    """Parameter-free ``[x, x², √x, log(1+x), ...]`` cycled to length ``d``."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0):
        raise DomainError("handcrafted embedding needs non-negative inputs (use minmax)")
    cols = [_HANDCRAFTED[k % len(_HANDCRAFTED)](arr) for k in range(d)]
    return Tensor(np.stack(cols, axis=-1))


def discretize_embed(x: Scalars, params: DiscretizationParams) -> Tensor:
    """Softmax-weighted average of bucket meta-embeddings."""
    if params.temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {params.temperature}")
    arr = np.asarray(x, dtype=np.float64)
    logits = add(mul(_as_column(arr), params.scorer_weight), params.scorer_bias)
    weights = softmax(mul(logits, 1.0 / params.temperature), axis=-1)
    out = matmul(weights, params.meta_embeddings)
    return take_rows(out, 0) if arr.ndim == 0 else out


def param_count_numerical(
    method: Union[str, NumericalMethod],
    d: int,
    l: int = DEFAULT_NUM_LAYERS,  # noqa: E741
    width: int = DEFAULT_NUM_WIDTH,
    v: int = DEFAULT_DISCRETIZE_BUCKETS,
) -> int:
    """Embedding parameters of one numerical field (scorer excluded)."""
    method = NumericalMethod.parse(method)
    if method in (NumericalMethod.NONE, NumericalMethod.HANDCRAFTED):
        return 0
    if method == NumericalMethod.LINEAR:
        return d
    if method == NumericalMethod.DISCRETIZE:
        return v * d
    if method == NumericalMethod.EXPAND:
        return 2 * d
    return 2 * d + ExUNetwork.count(NumDeepParams.layer_widths(d, l, width), activate_last=True)


class NumericalEmbedder:
    """
    Embedding function for one numerical field.

    Args:
        name: Field name
        method: Embedding method
        d: Embedding size
        layers: Depth of the deep transformation
        width: Hidden width of the deep transformation
        cap: ExU cap
        buckets: Bucket count for soft discretization
        temperature: Softmax temperature for soft discretization
        rng: Generator for parameter initialization
    """

    def __init__(
        self,
        name: str,
        method: Union[str, NumericalMethod],
        d: int,
        layers: int = DEFAULT_NUM_LAYERS,
        width: int = DEFAULT_NUM_WIDTH,
        cap: float = DEFAULT_EXU_CAP,
        buckets: int = DEFAULT_DISCRETIZE_BUCKETS,
        temperature: float = DEFAULT_TEMPERATURE,
        rng: Optional[np.random.Generator] = None,
    ):
        self.name = name
        self.method = NumericalMethod.parse(method)
        self.d = d
        self.layers = layers
        self.width = width
        self.buckets = buckets
        rng = rng if rng is not None else np.random.default_rng(0)

        self.expansion: Optional[NumExpansionParams] = None
        self.deep: Optional[NumDeepParams] = None
        self.scale: Optional[Tensor] = None
        self.discretization: Optional[DiscretizationParams] = None

        if self.method in (NumericalMethod.EXPAND, NumericalMethod.DEEP):
            self.expansion = NumExpansionParams.init(d)
        if self.method == NumericalMethod.DEEP:
            self.deep = NumDeepParams(d, layers, width, cap, rng)
        elif self.method == NumericalMethod.LINEAR:
            self.scale = Tensor(rng.normal(0.0, 1.0, d), tracked=True)
        elif self.method == NumericalMethod.DISCRETIZE:
            if temperature <= 0:
                raise ParameterError(f"temperature must be positive, got {temperature}")
            self.discretization = DiscretizationParams.init(buckets, d, temperature, rng)

    @property
    def output_dim(self) -> int:
        return 1 if self.method == NumericalMethod.NONE else self.d

    def embed(self, x: Scalars) -> Tensor:
        if self.method == NumericalMethod.NONE:
            arr = np.asarray(x, dtype=np.float64)
            return Tensor(arr.reshape(1) if arr.ndim == 0 else arr.reshape(-1, 1))
        if self.method == NumericalMethod.HANDCRAFTED:
            return handcrafted(x, self.d)
        if self.method == NumericalMethod.LINEAR:
            arr = np.asarray(x, dtype=np.float64)
            return mul(Tensor(arr) if arr.ndim == 0 else _as_column(arr), self.scale)
        if self.method == NumericalMethod.DISCRETIZE:
            return discretize_embed(x, self.discretization)
        xhat = expand(x, self.expansion)
        if self.method == NumericalMethod.EXPAND:
            return xhat
        return deep_transform_num(xhat, self.deep)

    def parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        if self.expansion is not None:
            params["gamma"] = self.expansion.gamma
            params["beta"] = self.expansion.beta
        if self.deep is not None:
            params.update({f"deep.{k}": t for k, t in self.deep.parameters().items()})
        if self.scale is not None:
            params["scale"] = self.scale
        if self.discretization is not None:
            params["meta_embeddings"] = self.discretization.meta_embeddings
            params["scorer_weight"] = self.discretization.scorer_weight
            params["scorer_bias"] = self.discretization.scorer_bias
        return params

    def param_count(self) -> int:
        return param_count_numerical(self.method, self.d, self.layers, self.width, self.buckets)

    def extra_param_count(self) -> int:
        """Scorer parameters of soft discretization, reported apart from the table."""
        return 2 * self.buckets if self.method == NumericalMethod.DISCRETIZE else 0


def embed_numerical(x: Scalars, embedder: NumericalEmbedder) -> Tensor:
    """Embed ``x`` with the field's configured method."""
    return embedder.embed(x)
