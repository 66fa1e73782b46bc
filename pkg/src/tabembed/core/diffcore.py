"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record a node on the active :class:`Tape` whenever one of their
inputs is tracked. :func:`backward` walks the tape in reverse and assigns
``grad`` on every tracked tensor it recorded.

Example:
    >>> w = Tensor([2.0], tracked=True)
    >>> with Tape() as tape:
    ...     loss = sum_(mul(w, w))
    >>> backward(loss, tape)
    >>> w.grad
    array([4.])
"""

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit
from scipy.special import softmax as _softmax

from tabembed.utils.constants import BCE_EPS, GRADCHECK_EPS
from tabembed.utils.errors import ContractError, DimensionError, ParameterError

ArrayLike = Union[float, int, Sequence, np.ndarray]
GradFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """N-dimensional real array that can take part in a gradient tape."""

    __slots__ = ("values", "grad", "tracked", "name")

    def __init__(self, values: ArrayLike, tracked: bool = False, name: Optional[str] = None):
        self.values = np.array(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.tracked = tracked
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, tracked={self.tracked}{label})"

    def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return add(self, other)

    def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return mul(self, other)


@dataclass
class Node:
    """One recorded operation."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    grad_fn: GradFn


_active_tape: ContextVar[Optional["Tape"]] = ContextVar("tabembed_active_tape", default=None)


class Tape:
    """Ordered record of operations, used as a context manager.

    A tape belongs to one execution context; the active tape is held in a
    ``ContextVar`` so separate threads or tasks can record independently.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._tensors: Dict[int, Tensor] = {}
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, grad_fn: GradFn) -> None:
        self.nodes.append(Node(op, inputs, output, grad_fn))
        for t in (*inputs, output):
            if t.tracked:
                self._tensors[id(t)] = t

    def produced(self, tensor: Tensor) -> bool:
        return any(node.output is tensor for node in self.nodes)

    def tracked_tensors(self) -> List[Tensor]:
        return list(self._tensors.values())


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap constants as untracked tensors."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(op: str, inputs: Tuple[Tensor, ...], values: np.ndarray, grad_fn: GradFn) -> Tensor:
    tracked = any(t.tracked for t in inputs)
    out = Tensor(values, tracked=tracked)
    tape = _active_tape.get()
    if tracked and tape is not None:
        tape.record(op, inputs, out, grad_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, *tensors: Tensor) -> None:
    try:
        np.broadcast_shapes(*(t.shape for t in tensors))
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise DimensionError(f"{op}: incompatible shapes {shapes}") from None


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def grad_fn(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), a.values + b.values, grad_fn)


def mul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def grad_fn(g: np.ndarray):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _emit("mul", (a, b), a.values * b.values, grad_fn)


def sum_(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""

    def grad_fn(g: np.ndarray):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", (x,), np.asarray(x.values.sum()), grad_fn)


def mean(x: Tensor) -> Tensor:
    n = max(x.size, 1)

    def grad_fn(g: np.ndarray):
        return (np.full(x.shape, float(g) / n),)

    return _emit("mean", (x,), np.asarray(x.values.mean()), grad_fn)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a[m×k]`` and ``b[k×n]``."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")

    def grad_fn(g: np.ndarray):
        return g @ b.values.T, a.values.T @ g

    return _emit("matmul", (a, b), a.values @ b.values, grad_fn)


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``W·x + b`` for a vector ``x[d_in]`` or a batch ``x[B×d_in]``."""
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.ndim not in (1, 2):
        raise DimensionError(f"affine: bad shapes x={x.shape} W={W.shape} b={b.shape}")
    if x.shape[-1] != W.shape[1]:
        raise DimensionError(f"affine: input width {x.shape[-1]} != W columns {W.shape[1]}")

    def grad_fn(g: np.ndarray):
        if x.ndim == 1:
            return g @ W.values, np.outer(g, x.values), g
        return g @ W.values, g.T @ x.values, g.sum(axis=0)

    return _emit("affine", (x, W, b), x.values @ W.values.T + b.values, grad_fn)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        values = x.values.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: {e}") from None

    def grad_fn(g: np.ndarray):
        return (g.reshape(x.shape),)

    return _emit("reshape", (x,), values, grad_fn)


def take_rows(table: Tensor, index: Union[int, np.ndarray]) -> Tensor:
    """Gather rows of ``table``; scalar index yields a vector."""
    idx = np.asarray(index, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"take_rows expects a 2-D table, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise DimensionError(f"take_rows index outside 0..{table.shape[0] - 1}")

    def grad_fn(g: np.ndarray):
        out = np.zeros(table.shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("take_rows", (table,), table.values[idx], grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    try:
        values = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: {e}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", tensors, values, grad_fn)


def weighted_sum(tensors: Sequence[Tensor], weights: Tensor) -> Tensor:
    """``Σ_t weights[t] · tensors[t]`` over same-shape tensors."""
    tensors = tuple(tensors)
    if weights.shape != (len(tensors),):
        raise DimensionError(f"weighted_sum: {len(tensors)} tensors but weights {weights.shape}")
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise DimensionError("weighted_sum: tensors must share one shape")
    values = sum(w * t.values for w, t in zip(weights.values, tensors))

    def grad_fn(g: np.ndarray):
        grads = tuple(w * g for w in weights.values)
        dw = np.array([float(np.sum(g * t.values)) for t in tensors])
        return (*grads, dw)

    return _emit("weighted_sum", (*tensors, weights), np.asarray(values), grad_fn)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def exu(x: Tensor, w: Tensor, b: Tensor, cap: float = 1.0) -> Tensor:
    """Exp-centered unit ``min(max((x - b)·exp(w), 0), cap)``."""
    if cap <= 0:
        raise ParameterError(f"exu cap must be positive, got {cap}")
    _check_broadcast("exu", x, w, b)
    scale = np.exp(w.values)
    z = (x.values - b.values) * scale
    active = (z > 0) & (z < cap)

    def grad_fn(g: np.ndarray):
        ga = np.where(active, g, 0.0)
        return (
            _unbroadcast(ga * scale, x.shape),
            _unbroadcast(ga * z, w.shape),
            _unbroadcast(-ga * scale, b.shape),
        )

    return _emit("exu", (x, w, b), np.clip(z, 0.0, cap), grad_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0

    def grad_fn(g: np.ndarray):
        return (np.where(mask, g, 0.0),)

    return _emit("relu", (x,), np.where(mask, x.values, 0.0), grad_fn)


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.values)

    def grad_fn(g: np.ndarray):
        return (g * s * (1.0 - s),)

    return _emit("sigmoid", (x,), s, grad_fn)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    s = _softmax(x.values, axis=axis)

    def grad_fn(g: np.ndarray):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return _emit("softmax", (x,), s, grad_fn)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def bce_loss(p: Tensor, y: Union[Tensor, ArrayLike], eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross-entropy with ``p`` clamped to ``[eps, 1 - eps]``."""
    y = as_tensor(y)
    if p.shape != y.shape:
        raise DimensionError(f"bce_loss: predictions {p.shape} vs labels {y.shape}")
    n = max(p.size, 1)
    pc = np.clip(p.values, eps, 1.0 - eps)
    yv = y.values
    loss = -np.mean(yv * np.log(pc) + (1.0 - yv) * np.log(1.0 - pc))
    inside = (p.values >= eps) & (p.values <= 1.0 - eps)

    def grad_fn(g: np.ndarray):
        dp = np.where(inside, (-yv / pc + (1.0 - yv) / (1.0 - pc)) / n, 0.0)
        dy = (np.log(1.0 - pc) - np.log(pc)) / n
        return float(g) * dp, float(g) * dy

    return _emit("bce_loss", (p, y), np.asarray(loss), grad_fn)


# ---------------------------------------------------------------------------
# Reverse pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor, tape: Tape) -> None:
    """Assign ``grad = ∂loss/∂t`` on every tracked tensor recorded on ``tape``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.tracked or not tape.produced(loss):
        raise ContractError("loss was not produced on this tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.output))
        if g is None:
            continue
        for inp, ig in zip(node.inputs, node.grad_fn(g)):
            if ig is None or not inp.tracked:
                continue
            key = id(inp)
            grads[key] = grads[key] + ig if key in grads else np.array(ig, dtype=np.float64)

    for t in tape.tracked_tensors():
        t.grad = grads.get(id(t), np.zeros_like(t.values))


def gradcheck(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = GRADCHECK_EPS,
    floor: float = 1e-4,
) -> float:
    """Largest relative error between tape and central-difference gradients.

    Args:
        fn: Zero-argument callable building a scalar loss from ``params``
        params: Tracked tensors to check (perturbed in place and restored)
        eps: Finite-difference step
        floor: Lower bound on the relative-error denominator

    Returns:
        Maximum relative error over every scalar of ``params``
    """
    with Tape() as tape:
        loss = fn()
    backward(loss, tape)
    analytic = [np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn().item()
            flat[i] = orig - eps
            down = fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            ai = a.reshape(-1)[i]
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), floor)
            worst = max(worst, err)
    return worst


def count_scalars(params: Mapping[str, Tensor]) -> int:
    """Number of tracked scalars in a parameter mapping."""
    return sum(t.size for t in params.values() if t.tracked)
