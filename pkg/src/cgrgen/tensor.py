"""Dense numpy-backed tensors with reverse-mode automatic differentiation.

Each differentiable op returns a new :class:`Tensor` whose node records the
inputs and a closure mapping the output cotangent to input cotangents.
:func:`backward` walks the recorded graph once in reverse topological order
and accumulates gradients into leaf tensors that require them.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    pass


class EmptyMask(ValueError):
    pass


class DoubleBackward(RuntimeError):
    pass


_default_dtype = np.dtype(np.float32)


def set_default_dtype(dtype) -> None:
    global _default_dtype
    _default_dtype = np.dtype(dtype)


def get_default_dtype() -> np.dtype:
    return _default_dtype


class Rng:
    """Counter-based random stream (Philox) keyed by ``(seed, stream)``."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.Philox(seq))

    def spawn(self, stream: int) -> "Rng":
        return Rng(self.seed, self.stream * 1_000_003 + stream + 1)

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"


class _Node:
    __slots__ = ("parents", "backward", "op")

    def __init__(self, parents: tuple["Tensor", ...], backward: Callable, op: str):
        self.parents = parents
        self.backward = backward
        self.op = op


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_node", "_consumed", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_default_dtype)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._node: _Node | None = None
        self._consumed = False
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or _default_dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = _Node(tuple(parents), backward, op)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b, dtype=as_tensor(a).dtype)
    _check_broadcast(a, b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, dtype=a.dtype)
    _check_broadcast(a, b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    a = as_tensor(a)
    b = as_tensor(b, dtype=a.dtype)
    _check_broadcast(a, b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


hadamard = mul


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., m, k] @ b[k, n]`` (or plain 2-D product)."""
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sum_all(x: Tensor) -> Tensor:
    return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return _result(
        np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, x.shape).astype(x.dtype),), "mean"
    )


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def getitem(x: Tensor, idx) -> Tensor:
    """Basic (slice / integer) indexing."""

    def backward(g):
        out = np.zeros_like(x.data)
        out[idx] += g
        return (out,)

    return _result(x.data[idx], (x,), backward, "getitem")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(data, tensors, backward, "stack")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(data, tensors, backward, "concat")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Join ``[..., T, C1]`` and ``[..., T, C2]`` into ``[..., T, C1 + C2]``."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeMismatch(f"concat_channels {a.shape} with {b.shape}")
    return concat([a, b], axis=-1)


def dropout(x: Tensor, p: float, train: bool, rng: Rng | None) -> Tensor:
    """Inverted dropout; the identity outside training or when ``p == 0``."""
    if not train or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def _shift(x: np.ndarray, s: int) -> np.ndarray:
    """Delay along the time axis (-2) by *s* steps, zero-filling the front."""
    if s == 0:
        return x
    out = np.zeros_like(x)
    if s < x.shape[-2]:
        out[..., s:, :] = x[..., : x.shape[-2] - s, :]
    return out


def _advance(g: np.ndarray, s: int) -> np.ndarray:
    """Adjoint of :func:`_shift`."""
    if s == 0:
        return g
    out = np.zeros_like(g)
    if s < g.shape[-2]:
        out[..., : g.shape[-2] - s, :] = g[..., s:, :]
    return out


def causal_dilated_conv1d(x: Tensor, w: Tensor, bias: Tensor, dilation: int = 1) -> Tensor:
    """``y[t] = bias + sum_k x[t - k*dilation] @ w[k]`` with zeros before t=0.

    ``x`` is ``[..., T, Cin]``, ``w`` is ``[K, Cin, Cout]``; the output keeps
    the input length and never reads positions after ``t``.
    """
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if w.ndim != 3 or x.ndim < 2 or x.shape[-1] != w.shape[1] or bias.shape != (w.shape[2],):
        raise ShapeMismatch(f"conv1d x{x.shape} w{w.shape} b{bias.shape}")
    K = w.shape[0]
    shifted = [_shift(x.data, k * dilation) for k in range(K)]
    y = bias.data + sum(s @ w.data[k] for k, s in enumerate(shifted))

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gw = np.stack([s.reshape(-1, s.shape[-1]).T @ g2 for s in shifted])
        gx = sum(_advance(g @ w.data[k].T, k * dilation) for k in range(K))
        gb = g2.sum(axis=0)
        return gx, gw, gb

    return _result(y, (x, w, bias), backward, "conv1d")


def _softmax_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(z: Tensor) -> Tensor:
    """Softmax over the last axis."""
    y = _softmax_np(z.data)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (z,), backward, "softmax")


def log_softmax(z: Tensor) -> Tensor:
    shifted = z.data - z.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _result(y, (z,), backward, "log_softmax")


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over unmasked positions.

    ``logits`` is ``[..., V]``; ``targets`` and ``mask`` share the leading
    shape. Masked-out positions contribute neither loss nor gradient.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeMismatch(f"targets {targets.shape} vs logits {logits.shape}")
    if logits.shape[-1] < 2:
        raise ShapeMismatch("need at least two classes")
    mask = np.ones(targets.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != targets.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs targets {targets.shape}")
    n = int(mask.sum())
    if n == 0:
        raise EmptyMask("no unmasked positions")
    z = logits.data
    shifted = z - z.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * mask).sum() / n

    def backward(g):
        grad = np.exp(logp)
        np.put_along_axis(grad, targets[..., None], np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
        grad *= (mask / n)[..., None]
        return (g * grad,)

    return _result(np.asarray(loss, dtype=z.dtype), (logits,), backward, "cross_entropy")


def one_hot(ids, depth: int, dtype=None) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros(ids.shape + (depth,), dtype=dtype or _default_dtype)
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into ``leaf.grad`` for every leaf that
    requires a gradient. The recorded graph is released afterwards, so a
    second call on the same loss raises :class:`DoubleBackward`."""
    if loss._consumed:
        raise DoubleBackward("backward already ran on this graph; rebuild the forward pass")
    if loss.data.size != 1:
        raise ShapeMismatch("backward needs a scalar loss")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor requiring grad")

    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for p in t._node.parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        if node is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        for p, pg in zip(node.parents, node.backward(g)):
            if not p.requires_grad:
                continue
            pg = np.asarray(pg, dtype=p.dtype)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    for t in order:
        t._node = None
    loss._consumed = True
