"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every value is a `Tensor` wrapping a C-contiguous float64 ndarray. While a
`Tape` is active (as a context manager), operations whose inputs require a
gradient are recorded onto it; `backward` then replays the tape in reverse
and returns a gradient map for the leaf tensors. With no active tape the
same functions run as plain forward numerics, which is how inference and
data generation execute.

Deliberate restrictions keep the gradient rules small and auditable:
float64 only, no broadcasting except `bias_add` and scalar ops, and a
fresh tape per forward pass. Tapes are thread-local, so independent
training or evaluation contexts may run in parallel threads without
synchronization; a single tape must never be shared.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from . import flopcount


class DimensionError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


class Tensor:
    """Dense real tensor: shape metadata over a flat row-major float64 buffer."""

    __slots__ = ("data", "requires_grad", "_src_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._src_tape = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


class Node:
    """One recorded operation: input tensors, output tensor, local gradient rule."""

    __slots__ = ("inputs", "output", "grad_fn")

    def __init__(self, inputs: tuple, output: Tensor, grad_fn: Callable):
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


class Tape:
    """Append-only record of operations for one forward pass.

    Nodes are appended in execution order, which is a topological order by
    construction; `backward` visits them exactly once in reverse.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        popped = _tape_stack().pop()
        assert popped is self, "mismatched Tape nesting"
        return False


def _record(output: Tensor, inputs: tuple, grad_fn: Callable) -> Tensor:
    stack = _tape_stack()
    if stack:
        tape = stack[-1]
        if any(t.requires_grad or t._src_tape is tape for t in inputs):
            tape.nodes.append(Node(inputs, output, grad_fn))
            output._src_tape = tape
    return output


def backward(loss: Tensor, tape: Tape, leaves: Iterable[Tensor] | None = None) -> dict:
    """Reverse-sweep the tape from a scalar loss.

    Returns a map Tensor -> float64 gradient array. With `leaves` given,
    the map contains exactly those tensors, with zeros for any leaf the
    recorded graph never touched; otherwise it contains every
    requires_grad tensor reached from the loss.
    """
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        gout = grads.get(node.output)
        if gout is None:
            continue
        gins = node.grad_fn(gout)
        for inp, gin in zip(node.inputs, gins):
            if gin is None:
                continue
            if inp.requires_grad or inp._src_tape is tape:
                held = grads.get(inp)
                grads[inp] = gin if held is None else held + gin
    if leaves is not None:
        return {t: grads.get(t, np.zeros_like(t.data)) for t in leaves}
    return {t: g for t, g in grads.items() if t.requires_grad}


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with gradients dA = g @ B^T, dB = A^T @ g."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes incompatible: {a.shape} x {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    flopcount.add(2 * m * k * n)
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data

    def grad_fn(g):
        return g @ bd.T, ad.T @ g

    return _record(out, (a, b), grad_fn)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over matching leading batch dims (3-D only)."""
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm shapes incompatible: {a.shape} x {b.shape}")
    bsz, m, k = a.shape
    n = b.shape[2]
    flopcount.add(2 * bsz * m * k * n)
    out = Tensor(a.data @ b.data)
    ad, bd = a.data, b.data

    def grad_fn(g):
        return g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g

    return _record(out, (a, b), grad_fn)


# ---------------------------------------------------------------------------
# elementwise and shape ops


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} shapes differ: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    flopcount.add(a.size)
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    flopcount.add(a.size)
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    flopcount.add(a.size)
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data
    return _record(out, (a, b), lambda g: (g * bd, g * ad))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    flopcount.add(x.size)
    out = Tensor(x.data * c)
    return _record(out, (x,), lambda g: (g * c,))


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a 1-D bias along the last axis (the one permitted broadcast)."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"bias_add needs 1-D bias matching last dim: {x.shape} + {b.shape}")
    flopcount.add(x.size)
    out = Tensor(x.data + b.data)
    lead = tuple(range(x.ndim - 1))

    def grad_fn(g):
        return g, g.sum(axis=lead) if lead else g

    return _record(out, (x, b), grad_fn)


def relu(x: Tensor) -> Tensor:
    flopcount.add(x.size)
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0.0  # subgradient 0 at the kink
    return _record(out, (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    flopcount.add(4 * x.size)
    y = 1.0 / (1.0 + np.exp(-np.abs(x.data)))
    y = np.where(x.data >= 0.0, y, 1.0 - y)
    out = Tensor(y)
    return _record(out, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x: Tensor) -> Tensor:
    flopcount.add(x.size)
    y = np.exp(x.data)
    out = Tensor(y)
    return _record(out, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    flopcount.add(x.size)
    xd = x.data
    out = Tensor(np.log(xd))
    return _record(out, (x,), lambda g: (g / xd,))


def log1p(x: Tensor) -> Tensor:
    flopcount.add(x.size)
    xd = x.data
    out = Tensor(np.log1p(xd))
    return _record(out, (x,), lambda g: (g / (1.0 + xd),))


def abs_(x: Tensor) -> Tensor:
    flopcount.add(x.size)
    out = Tensor(np.abs(x.data))
    sign = np.sign(x.data)
    return _record(out, (x,), lambda g: (g * sign,))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DimensionError("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), grad_fn)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.shape[axis]):
        raise DimensionError(f"slice [{start}:{stop}] invalid for axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = Tensor(x.data[index])
    xshape = x.shape

    def grad_fn(g):
        full = np.zeros(xshape)
        full[index] = g
        return (full,)

    return _record(out, (x,), grad_fn)


def transpose(x: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    out = Tensor(x.data.transpose(axes))
    inverse = tuple(np.argsort(axes))
    return _record(out, (x,), lambda g: (np.ascontiguousarray(g.transpose(inverse)),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    xshape = x.shape
    return _record(out, (x,), lambda g: (g.reshape(xshape),))


def sum_all(x: Tensor) -> Tensor:
    flopcount.add(x.size)
    out = Tensor(x.data.sum())
    xshape = x.shape
    return _record(out, (x,), lambda g: (np.full(xshape, g.reshape(-1)[0]),))


def mean_all(x: Tensor) -> Tensor:
    flopcount.add(x.size)
    out = Tensor(x.data.mean())
    xshape, n = x.shape, x.size
    return _record(out, (x,), lambda g: (np.full(xshape, g.reshape(-1)[0] / n),))


# ---------------------------------------------------------------------------
# neural-network primitives


def softmax(x: Tensor, axis: int) -> Tensor:
    """Max-stabilized softmax; each slice along `axis` sums to one."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    flopcount.add(4 * x.size)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(out, (x,), grad_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty last axis")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} != ({d},)")
    flopcount.add(8 * x.size)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor(xhat * gamma.data + beta.data)
    gd = gamma.data
    lead = tuple(range(x.ndim - 1))

    def grad_fn(g):
        gh = g * gd
        gx = inv_std * (
            gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        )
        ggamma = (g * xhat).sum(axis=lead) if lead else g * xhat
        gbeta = g.sum(axis=lead) if lead else g
        return gx, ggamma, gbeta

    return _record(out, (x, gamma, beta), grad_fn)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """2-D cross-correlation with zero "same" padding.

    x: (T, F, C_in), w: (k, k, C_in, C_out) with odd k, b: (C_out,).
    Spatial dims are preserved. Implemented as k*k shifted matmuls.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 3-D input and 4-D kernel: {x.shape}, {w.shape}")
    t, f, c_in = x.shape
    k, k2, wc_in, c_out = w.shape
    if k != k2 or k % 2 == 0:
        raise DimensionError(f"conv2d kernel must be square with odd size, got {w.shape[:2]}")
    if wc_in != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {c_in}, kernel {wc_in}")
    if b.shape != (c_out,):
        raise DimensionError(f"conv2d bias shape {b.shape} != ({c_out},)")
    flopcount.add(t * f * c_out * (2 * k * k * c_in + 1))
    pad = k // 2
    xp = np.zeros((t + k - 1, f + k - 1, c_in))
    xp[pad : pad + t, pad : pad + f] = x.data
    acc = np.tile(b.data, (t, f, 1))
    wd = w.data
    for di in range(k):
        for dj in range(k):
            patch = xp[di : di + t, dj : dj + f].reshape(t * f, c_in)
            acc += (patch @ wd[di, dj]).reshape(t, f, c_out)
    out = Tensor(acc)

    def grad_fn(g):
        g2 = g.reshape(t * f, c_out)
        gw = np.zeros_like(wd)
        gxp = np.zeros_like(xp)
        for di in range(k):
            for dj in range(k):
                patch = xp[di : di + t, dj : dj + f].reshape(t * f, c_in)
                gw[di, dj] = patch.T @ g2
                gxp[di : di + t, dj : dj + f] += (g2 @ wd[di, dj].T).reshape(t, f, c_in)
        gx = np.ascontiguousarray(gxp[pad : pad + t, pad : pad + f])
        gb = g.sum(axis=(0, 1))
        return gx, gw, gb

    return _record(out, (x, w, b), grad_fn)
