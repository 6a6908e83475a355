"""Dense-tensor math with reverse-mode automatic differentiation.

Values are numpy arrays wrapped in :class:`Tensor`. Operations executed while
a :class:`Tape` is active are recorded in execution order together with a
vector-Jacobian closure; :meth:`Tape.backward` replays the recording in
reverse exactly once, accumulating gradients into every reachable tensor that
has ``requires_grad`` set.

Training runs in float32 by default. Gradient verification against finite
differences needs float64; wrap such code in ``with precision("float64"):``.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class DomainError(ValueError):
    """Operand values outside an operation's valid domain."""


_DTYPES = {"float32": np.float32, "float64": np.float64}
_default_dtype = np.float32


def default_dtype() -> type:
    return _default_dtype


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the default dtype ("float32" or "float64")."""
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}")
    previous = _default_dtype
    _default_dtype = _DTYPES[name]
    try:
        yield
    finally:
        _default_dtype = previous


class _Node:
    __slots__ = ("out", "vjp")

    def __init__(self, out: "Tensor", vjp: Callable[[np.ndarray], None]):
        self.out = out
        self.vjp = vjp


# Stack of recording contexts; None entries mark no-grad regions.
_tape_stack: list["Tape | None"] = []


def _active_tape() -> "Tape | None":
    return _tape_stack[-1] if _tape_stack else None


class Tape:
    """Ordered recording of primitive operations for one backward pass.

    Ops are appended in execution order, so every op's inputs precede it and
    a single reverse sweep visits each op exactly once.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        popped = _tape_stack.pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: "Tensor") -> None:
        """Accumulate d(loss)/d(tensor) into .grad for all recorded inputs."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.grad is None:
            loss.grad = np.zeros_like(loss.data)
        loss.grad += np.ones_like(loss.data)
        for node in reversed(self._nodes):
            grad = node.out.grad
            if grad is not None:
                node.vjp(grad)


@contextlib.contextmanager
def no_grad():
    """Disable recording; forward values are unaffected."""
    _tape_stack.append(None)
    try:
        yield
    finally:
        _tape_stack.pop()


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or _default_dtype)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = requires_grad
        return out

    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def is_finite(self) -> bool:
        """Validity check: no NaN or Inf anywhere."""
        return bool(np.isfinite(self.data).all())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- arithmetic dunders --------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other, self), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method forms ---------------------------------------------------
    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def sin(self):
        return sin(self)

    def cos(self):
        return cos(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def softplus(self):
        return softplus(self)

    def tanh(self):
        return tanh(self)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def cumsum_exclusive(self, axis: int):
        return cumsum_exclusive(self, axis)


def _as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else _default_dtype
    return Tensor(value, dtype=dtype)


def _record(out: Tensor, vjp: Callable[[np.ndarray], None]) -> None:
    tape = _active_tape()
    if tape is not None:
        tape._nodes.append(_Node(out, vjp))


def _tracked(*inputs: Tensor) -> bool:
    return _active_tape() is not None and any(t.requires_grad for t in inputs)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # Copy: g may alias an upstream gradient buffer that other vjps read.
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
        if t.grad.shape != t.data.shape:
            t.grad = np.broadcast_to(t.grad, t.data.shape).copy()
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape` (inverse of the forward broadcast)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, forward, vjp_a, vjp_b):
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    data = forward(a.data, b.data)
    track = _tracked(a, b)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, a=a, b=b, out=out):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(vjp_a(g, a.data, b.data, out.data), a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(vjp_b(g, a.data, b.data, out.data), b.data.shape))
        _record(out, vjp)
    return out


def _unary(a, forward, vjp_fn):
    a = _as_tensor(a)
    data = forward(a.data)
    track = _tracked(a)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, a=a, out=out):
            _accumulate(a, vjp_fn(g, a.data, out.data))
        _record(out, vjp)
    return out


# ----------------------------------------------------------------------
# binary primitives
# ----------------------------------------------------------------------

def add(a, b):
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y, o: g,
                   lambda g, x, y, o: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y, o: g,
                   lambda g, x, y, o: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y, o: g * y,
                   lambda g, x, y, o: g * x)


def div(a, b):
    return _binary(a, b, lambda x, y: x / y,
                   lambda g, x, y, o: g / y,
                   lambda g, x, y, o: -g * x / (y * y))


def power(a, exponent: float):
    """Elementwise a**exponent for a constant real exponent."""
    a = _as_tensor(a)
    exponent = float(exponent)
    if exponent != int(exponent) and np.any(a.data <= 0):
        raise DomainError("power with non-integer exponent needs a positive base")
    data = a.data ** exponent
    track = _tracked(a)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, a=a):
            _accumulate(a, g * exponent * a.data ** (exponent - 1.0))
        _record(out, vjp)
    return out


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    data = a.data @ b.data
    track = _tracked(a, b)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, a=a, b=b):
            if a.requires_grad:
                _accumulate(a, g @ b.data.T)
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)
        _record(out, vjp)
    return out


def affine(x, w, b):
    """x @ w + b with the bias row broadcast over rows; one fused node."""
    x = _as_tensor(x)
    w = _as_tensor(w, x)
    b = _as_tensor(b, x)
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine inner dims differ: {x.shape} vs {w.shape}")
    data = x.data @ w.data + b.data
    track = _tracked(x, w, b)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, x=x, w=w, b=b):
            if x.requires_grad:
                _accumulate(x, g @ w.data.T)
            if w.requires_grad:
                _accumulate(w, x.data.T @ g)
            if b.requires_grad:
                _accumulate(b, _unbroadcast(g, b.data.shape))
        _record(out, vjp)
    return out


# ----------------------------------------------------------------------
# unary primitives
# ----------------------------------------------------------------------

def neg(a):
    return _unary(a, lambda x: -x, lambda g, x, o: -g)


def exp(a):
    return _unary(a, np.exp, lambda g, x, o: g * o)


def log(a):
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log needs strictly positive input")
    return _unary(a, np.log, lambda g, x, o: g / x)


def sqrt(a):
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt needs non-negative input")
    return _unary(a, np.sqrt, lambda g, x, o: g * 0.5 / o)


def sin(a):
    return _unary(a, np.sin, lambda g, x, o: g * np.cos(x))


def cos(a):
    return _unary(a, np.cos, lambda g, x, o: -g * np.sin(x))


def relu(a):
    return _unary(a, lambda x: np.maximum(x, 0),
                  lambda g, x, o: g * (x > 0))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    return _unary(a, _sigmoid, lambda g, x, o: g * o * (1.0 - o))


def softplus(a):
    return _unary(a, lambda x: np.logaddexp(0.0, x).astype(x.dtype),
                  lambda g, x, o: g * _sigmoid(x))


def tanh(a):
    return _unary(a, np.tanh, lambda g, x, o: g * (1.0 - o * o))


def clip(a, lo: float, hi: float):
    """Clamp values to [lo, hi]; gradient passes only inside the interval."""
    a = _as_tensor(a)
    return _unary(a, lambda x: np.clip(x, lo, hi),
                  lambda g, x, o: g * ((x >= lo) & (x <= hi)))


def clamp_min(a, lo: float):
    a = _as_tensor(a)
    return _unary(a, lambda x: np.maximum(x, lo),
                  lambda g, x, o: g * (x >= lo))


# ----------------------------------------------------------------------
# shape and reduction primitives
# ----------------------------------------------------------------------

def tensor_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    track = _tracked(a)
    out = Tensor._wrap(np.asarray(data), track)
    if track:
        shape = a.data.shape

        def vjp(g, a=a):
            if axis is None:
                _accumulate(a, np.full(shape, g.reshape(-1)[0], dtype=a.data.dtype))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                _accumulate(a, np.broadcast_to(gg, shape).copy())
        _record(out, vjp)
    return out


def tensor_mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return tensor_sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a, shape: tuple[int, ...]):
    a = _as_tensor(a)
    data = a.data.reshape(shape)
    track = _tracked(a)
    out = Tensor._wrap(data, track)
    if track:
        orig = a.data.shape

        def vjp(g, a=a):
            _accumulate(a, g.reshape(orig))
        _record(out, vjp)
    return out


def cumsum_exclusive(a, axis: int):
    """out[i] = sum of entries strictly before i along `axis`."""
    a = _as_tensor(a)
    inclusive = np.cumsum(a.data, axis=axis)
    data = np.zeros_like(a.data)
    lead = (slice(None),) * axis
    data[lead + (slice(1, None),)] = inclusive[lead + (slice(None, -1),)]
    track = _tracked(a)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, a=a):
            rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
            gg = np.zeros_like(g)
            gg[lead + (slice(None, -1),)] = rev[lead + (slice(1, None),)]
            _accumulate(a, gg)
        _record(out, vjp)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 1):
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    track = _active_tape() is not None and any(t.requires_grad for t in tensors)
    out = Tensor._wrap(data, track)
    if track:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def vjp(g, tensors=tensors):
            for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(start, stop)
                    _accumulate(t, g[tuple(sl)])
        _record(out, vjp)
    return out


def narrow(a, axis: int, start: int, length: int):
    """Contiguous slice [start, start+length) along `axis`."""
    a = _as_tensor(a)
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    data = a.data[sl]
    track = _tracked(a)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, a=a):
            gg = np.zeros_like(a.data)
            gg[sl] = g
            _accumulate(a, gg)
        _record(out, vjp)
    return out


def group_rowsum(a, group_size: int):
    """Sum groups of `group_size` consecutive rows: (g*n, k) -> (g, k)."""
    a = _as_tensor(a)
    rows, cols = a.data.shape
    if rows % group_size != 0:
        raise ShapeError(f"{rows} rows not divisible by group size {group_size}")
    groups = rows // group_size
    data = a.data.reshape(groups, group_size, cols).sum(axis=1)
    track = _tracked(a)
    out = Tensor._wrap(data, track)
    if track:
        def vjp(g, a=a):
            _accumulate(a, np.repeat(g, group_size, axis=0))
        _record(out, vjp)
    return out


def stop_gradient(a) -> Tensor:
    """Forward identity that blocks gradient flow."""
    a = _as_tensor(a)
    return Tensor._wrap(a.data, requires_grad=False)


# ----------------------------------------------------------------------
# contract-level elementwise dispatch
# ----------------------------------------------------------------------

_UNARY_KINDS = {
    "neg": neg, "exp": exp, "log": log, "relu": relu,
    "sigmoid": sigmoid, "softplus": softplus, "tanh": tanh,
}
_BINARY_KINDS = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": None}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Strict-contract elementwise dispatch.

    Binary kinds accept equal shapes or a scalar paired with a tensor; other
    shape combinations are rejected even when numpy could broadcast them.
    """
    a = _as_tensor(a)
    if kind in _UNARY_KINDS:
        if b is not None:
            raise ShapeError(f"{kind} is unary")
        return _UNARY_KINDS[kind](a)
    if kind not in _BINARY_KINDS:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    if b is None:
        raise ShapeError(f"{kind} is binary")
    if kind == "pow":
        if isinstance(b, Tensor) and b.data.size != 1:
            raise ShapeError("pow exponent must be scalar")
        expo = float(b.data.reshape(-1)[0]) if isinstance(b, Tensor) else float(b)
        return power(a, expo)
    b = _as_tensor(b, a)
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"elementwise {kind}: shapes {a.shape} and {b.shape} "
                         "must match or one side must be scalar")
    if kind == "div" and np.any(b.data == 0):
        raise DomainError("division by zero")
    return _BINARY_KINDS[kind](a, b)
