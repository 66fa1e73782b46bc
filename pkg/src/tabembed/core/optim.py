"""Adam optimizer over named parameter tensors."""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from tabembed.core.diffcore import Tensor
from tabembed.utils.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, DEFAULT_LEARNING_RATE
from tabembed.utils.errors import ContractError, ParameterError


@dataclass
class AdamState:
    """Moment accumulators keyed by parameter name, plus the shared step counter."""

    lr: float = DEFAULT_LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ParameterError(f"learning rate must be positive, got {self.lr}")


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """
    Apply one bias-corrected Adam update in place.

    Args:
        params: Parameters to update, by name
        grads: Gradients with the same names and shapes
        state: Optimizer state, advanced by one step

    Raises:
        ContractError: If any parameter has no gradient
    """
    missing = [name for name in params if grads.get(name) is None]
    if missing:
        raise ContractError(f"missing gradient for: {', '.join(missing[:5])}")

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    step_size = state.lr / bc1

    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient for '{name}' has shape {g.shape}, expected {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)

        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values -= step_size * m / (np.sqrt(v / bc2) + state.eps)


class Adam:
    """Stateful wrapper reading gradients from the tensors themselves."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = DEFAULT_LEARNING_RATE):
        self.params = dict(params)
        self.state = AdamState(lr=lr)

    def step(self) -> None:
        adam_step(self.params, {k: p.grad for k, p in self.params.items()}, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
