"""Feed-forward networks with exp-centered (ExU) activations."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from tabembed.core.diffcore import Tensor, affine, exu
from tabembed.utils.constants import DEFAULT_EXU_CAP
from tabembed.utils.errors import ConfigurationError


@dataclass
class ExULayer:
    """One affine map, optionally followed by a per-unit ExU activation."""

    weight: Tensor
    bias: Tensor
    exu_weight: Optional[Tensor] = None
    exu_bias: Optional[Tensor] = None

    @property
    def activated(self) -> bool:
        return self.exu_weight is not None


class ExUNetwork:
    """
    Stack of affine layers with ExU activations.

    Every layer except possibly the last applies ``exu`` after its affine map;
    ``activate_last`` controls the final layer.

    Args:
        widths: Layer widths ``[d_in, h_1, ..., d_out]``
        cap: Upper clip of the ExU activation
        activate_last: Whether the final layer is ExU-activated
        rng: Generator used for Glorot-uniform weight initialization
    """

    def __init__(
        self,
        widths: Sequence[int],
        cap: float = DEFAULT_EXU_CAP,
        activate_last: bool = True,
        rng: Optional[np.random.Generator] = None,
    ):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigurationError(f"network widths must be >= 2 positive sizes, got {widths}")
        if cap <= 0:
            raise ConfigurationError(f"ExU cap must be positive, got {cap}", field="--cap")

        rng = rng if rng is not None else np.random.default_rng(0)
        self.widths = tuple(widths)
        self.cap = float(cap)
        self.activate_last = activate_last
        self.layers: List[ExULayer] = []

        n_layers = len(widths) - 1
        for i, (d_in, d_out) in enumerate(zip(widths[:-1], widths[1:])):
            limit = np.sqrt(6.0 / (d_in + d_out))
            layer = ExULayer(
                weight=Tensor(rng.uniform(-limit, limit, (d_out, d_in)), tracked=True),
                bias=Tensor(np.zeros(d_out), tracked=True),
            )
            if i < n_layers - 1 or activate_last:
                layer.exu_weight = Tensor(np.zeros(d_out), tracked=True)
                layer.exu_bias = Tensor(np.zeros(d_out), tracked=True)
            self.layers.append(layer)

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ConfigurationError(f"network expects width {self.d_in}, got {x.shape[-1]}")
        h = x
        for layer in self.layers:
            h = affine(h, layer.weight, layer.bias)
            if layer.activated:
                h = exu(h, layer.exu_weight, layer.exu_bias, self.cap)
        return h

    def parameters(self) -> Dict[str, Tensor]:
        params: Dict[str, Tensor] = {}
        for i, layer in enumerate(self.layers):
            params[f"layer{i}.weight"] = layer.weight
            params[f"layer{i}.bias"] = layer.bias
            if layer.activated:
                params[f"layer{i}.exu_weight"] = layer.exu_weight
                params[f"layer{i}.exu_bias"] = layer.exu_bias
        return params

    def zero_(self) -> None:
        """Set every parameter to zero (identity / null network in tests)."""
        for t in self.parameters().values():
            t.values[...] = 0.0

    @staticmethod
    def count(widths: Sequence[int], activate_last: bool = True) -> int:
        """Exact number of scalars allocated for ``widths``."""
        total = 0
        n_layers = len(widths) - 1
        for i, (d_in, d_out) in enumerate(zip(widths[:-1], widths[1:])):
            total += d_in * d_out + d_out
            if i < n_layers - 1 or activate_last:
                total += 2 * d_out
        return total
