"""Dense float64 tensors with a tape-based reverse-mode differentiator.

Every op takes :class:`Tensor` inputs (or plain arrays / scalars, which are
treated as constants).  When any input belongs to a :class:`Tape`, the op is
appended to that tape together with a closure computing the vector-Jacobian
product.  ``Tape.backward`` then replays the record in exact reverse order.

The spike primitive lives here too because its backward rule (the surrogate
derivative) is part of the differentiation contract, not of the neuron model.
"""

from __future__ import annotations

import contextlib
import warnings
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "SurrogateConfig",
    "TapeError",
    "ShapeError",
    "NonFiniteError",
    "count_macs",
    "as_tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "concat",
    "stack",
    "index",
    "reshape",
    "transpose",
    "softmax_lastdim",
    "log_softmax_lastdim",
    "layernorm",
    "relu",
    "exp",
    "log",
    "softplus",
    "sum",
    "mean",
    "l2_normalize",
    "dropout_mask_apply",
    "spike",
    "surrogate_grad",
    "detach",
]


class TapeError(RuntimeError):
    """Misuse of a tape (non-scalar loss, double backward, mixed tapes)."""


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    """A float64 array, optionally attached to a tape.

    Tensors compare by identity, so they can key dictionaries of gradients.
    """

    __slots__ = ("data", "tape", "name", "__weakref__")

    def __init__(self, data, tape: Tape | None = None, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    @property
    def T(self):
        return transpose(self)


@dataclass(frozen=True)
class SurrogateConfig:
    """Slope of the fast-sigmoid surrogate derivative."""

    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"surrogate alpha must be positive, got {self.alpha}")


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


class Gradients:
    """Mapping from recorded tensors to their accumulated gradients.

    Looking up a tensor that the loss does not depend on returns zeros of the
    right shape rather than raising.
    """

    def __init__(self, grads: dict[int, np.ndarray], tape: Tape):
        self._grads = grads
        self._leaves = tape.leaves
        self._tape = tape  # keeps recorded tensors alive so ids stay unique

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        return np.zeros_like(t.data) if g is None else g

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads

    def leaves(self) -> dict[str, np.ndarray]:
        """Gradients of every named leaf, zero-filled for untouched ones."""
        return {t.name: self[t] for t in self._leaves if t.name is not None}


class Tape:
    """Ordered record of differentiable ops.  Single owner, single use."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.leaves: list[Tensor] = []
        self._consumed = False

    def leaf(self, data, name: str | None = None) -> Tensor:
        if self._consumed:
            raise TapeError("tape already consumed by backward(); start a new tape")
        t = Tensor(np.array(data, dtype=np.float64, copy=True), tape=self, name=name)
        self.leaves.append(t)
        return t

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp, op: str) -> None:
        if self._consumed:
            raise TapeError("tape already consumed by backward(); start a new tape")
        out.tape = self
        self.nodes.append(_Node(out, inputs, vjp, op))

    def backward(self, loss: Tensor) -> Gradients:
        if self._consumed:
            raise TapeError("backward() called twice on the same tape")
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar-shaped, got shape {loss.shape}")
        if loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        self._consumed = True

        loss_pos = None
        for i, node in enumerate(self.nodes):
            if node.out is loss:
                loss_pos = i
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        if loss_pos is None:
            # loss is itself a leaf
            return Gradients(grads, self)
        trailing = len(self.nodes) - loss_pos - 1
        if trailing:
            warnings.warn(
                f"{trailing} op(s) recorded after the loss are ignored by backward()",
                stacklevel=2,
            )

        for node in reversed(self.nodes[: loss_pos + 1]):
            g = grads.get(id(node.out))
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or inp.tape is not self:
                    continue
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else prev + gi
        return Gradients(grads, self)


# ----------------------------------------------------------------------------
# multiply-accumulate accounting

class _MacCounter:
    def __init__(self):
        self.total = 0


_mac_stack: list[_MacCounter] = []


@contextlib.contextmanager
def count_macs() -> Iterator[_MacCounter]:
    """Count multiply-accumulates performed by ``matmul`` inside the block."""
    counter = _MacCounter()
    _mac_stack.append(counter)
    try:
        yield counter
    finally:
        _mac_stack.pop()


def _add_macs(n: int) -> None:
    for c in _mac_stack:
        c.total += n


# ----------------------------------------------------------------------------
# helpers

def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(op: str, *ts: Tensor) -> Tape | None:
    tape = None
    for t in ts:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise TapeError(f"{op}: inputs belong to different tapes")
            tape = t.tape
    return tape


def _finish(op: str, value: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op}: produced non-finite values")
    out = Tensor(value)
    tape = _tape_of(op, *inputs)
    if tape is not None:
        tape.record(out, inputs, vjp, op)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ----------------------------------------------------------------------------
# ops

def matmul(a, b) -> Tensor:
    """``a @ b`` for (..., m, k) @ (..., k, n) or (..., m, k) @ (k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ, {a.shape} vs {b.shape}")
    out = np.matmul(a.data, b.data)
    _add_macs(out.size * a.shape[-1])

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return _finish("matmul", out, (a, b), vjp)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _finish(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _finish(
        "sub", a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _finish(
        "mul", a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _finish(
        "div", out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _finish("neg", -a.data, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _finish("scale", a.data * c, (a,), lambda g: (g * c,))


def concat(ts: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in ts)
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _finish("concat", out, ts, vjp)


def stack(ts: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in ts)
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in ts]}") from None

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _finish("stack", out, ts, vjp)


def index(a, key) -> Tensor:
    """Basic or integer-array indexing; the backward scatters with ``np.add.at``."""
    a = as_tensor(a)
    try:
        out = a.data[key]
    except IndexError as e:
        raise ShapeError(f"slice: {e} (input shape {a.shape})") from None

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _finish("slice", np.array(out, copy=True), (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _finish("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _finish(
        "transpose", np.transpose(a.data, axes), (a,),
        lambda g: (np.transpose(g, inv),),
    )


def softmax_lastdim(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _finish("softmax_lastdim", p, (a,), vjp)


def log_softmax_lastdim(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def vjp(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _finish("log_softmax_lastdim", out, (a,), vjp)


def layernorm(a, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis (no affine part; compose with mul/add)."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _finish("layernorm", y, (a,), vjp)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _finish("relu", a.data * mask, (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        e = np.exp(a.data)
    return _finish("exp", e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _finish("log", out, (a,), lambda g: (g / a.data,))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _finish("softplus", out, (a,), lambda g: (g * sig,))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _finish("sum", np.asarray(out), (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size // max(np.asarray(out).size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _finish("mean", np.asarray(out), (a,), vjp)


def l2_normalize(a, eps: float = 1e-12) -> Tensor:
    """Scale each last-axis row to unit Euclidean norm."""
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    y = a.data / norm

    def vjp(g):
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / norm,)

    return _finish("l2_normalize", y, (a,), vjp)


def dropout_mask_apply(a, mask: np.ndarray) -> Tensor:
    """Multiply by a pre-drawn (already rescaled) dropout mask."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.shape:
        raise ShapeError(f"dropout_mask_apply: mask {mask.shape} vs input {a.shape}")
    return _finish("dropout_mask_apply", a.data * mask, (a,), lambda g: (g * mask,))


def detach(a) -> Tensor:
    return Tensor(as_tensor(a).data.copy())


def surrogate_grad(x, alpha: float) -> np.ndarray:
    """Fast-sigmoid surrogate derivative ``alpha / (alpha*|x| + 1)**2``."""
    x = np.asarray(x, dtype=np.float64)
    return alpha / (alpha * np.abs(x) + 1.0) ** 2


def spike(x, cfg: SurrogateConfig = SurrogateConfig(), mode: str = "hard") -> Tensor:
    """Heaviside spike of ``x = u - V_th``.

    ``hard``: forward ``1[x >= 0]``, backward the surrogate derivative.
    ``soft``: forward ``sigmoid(alpha*x)`` with its exact derivative, so that
    finite-difference harnesses see a consistent forward/backward pair.
    """
    x = as_tensor(x)
    a = cfg.alpha
    if mode == "hard":
        out = (x.data >= 0.0).astype(np.float64)
        sg = surrogate_grad(x.data, a)
    elif mode == "soft":
        out = 0.5 * (1.0 + np.tanh(0.5 * a * x.data))
        sg = a * out * (1.0 - out)
    else:
        raise ValueError(f"spike mode must be 'hard' or 'soft', got {mode!r}")
    return _finish("spike", out, (x,), lambda g: (g * sg,))
