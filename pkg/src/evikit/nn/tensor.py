"""Dense tensors with reverse-mode differentiation over a linear tape.

Every differentiable op appends ``(output, inputs, vjp)`` to the active tape
when at least one input requires a gradient.  ``Tensor.backward`` walks the
tape in reverse, accumulating into ``.grad``, and then clears it.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float64


class Tape:
    def __init__(self):
        self.nodes: list[tuple["Tensor", tuple["Tensor", ...], Callable]] = []
        self.enabled = True

    def record(self, out: "Tensor", inputs: Sequence["Tensor"], vjp: Callable) -> "Tensor":
        if self.enabled and any(t.requires_grad for t in inputs):
            out.requires_grad = True
            out._node = len(self.nodes)
            self.nodes.append((out, tuple(inputs), vjp))
        return out

    def backward(self, root: "Tensor", grad=None) -> None:
        if root._node is None:
            raise RuntimeError("tensor is not on the tape; nothing to differentiate")
        if grad is None:
            if root.data.size != 1:
                raise ValueError("grad must be given for non-scalar outputs")
            grad = np.ones_like(root.data)
        root.grad = np.asarray(grad, dtype=root.data.dtype).reshape(root.shape)
        for out, inputs, vjp in reversed(self.nodes[: root._node + 1]):
            g = out.grad
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if gi is None or not t.requires_grad:
                    continue
                t.grad = gi if t.grad is None else t.grad + gi
            if out is not root:
                out.grad = None  # intermediate grads are not kept
        self.clear()

    def clear(self) -> None:
        for out, _, _ in self.nodes:
            out._node = None
        self.nodes.clear()


_tape = Tape()


def get_tape() -> Tape:
    return _tape


@contextlib.contextmanager
def no_grad():
    prev = _tape.enabled
    _tape.enabled = False
    try:
        yield
    finally:
        _tape.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_node")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._node = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def backward(self, grad=None) -> None:
        _tape.backward(self, grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    return _tape.record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    return _tape.record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)
    return _tape.record(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    return _tape.record(out, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)
    out = Tensor(x.data * scale)
    return _tape.record(out, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))  # overflow-free logistic
    out = Tensor(s)
    return _tape.record(out, (x,), lambda g: (g * s * (1.0 - s),))


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return _tape.record(out, (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _tape.record(out, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


def narrow(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """``x[start:stop]`` along ``axis``."""
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = Tensor(x.data[sl])

    def vjp(g):
        full = np.zeros_like(x.data)
        full[sl] = g
        return (full,)

    return _tape.record(out, (x,), vjp)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(x.data.sum())
    return _tape.record(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = Tensor(x.data.mean())
    return _tape.record(out, (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def global_avg_pool(x: Tensor) -> Tensor:
    """``C x H x W`` -> ``C`` spatial means."""
    if x.ndim != 3:
        raise ValueError(f"global_avg_pool expects C x H x W, got {x.shape}")
    c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(1, 2)))
    return _tape.record(
        out, (x,), lambda g: (np.broadcast_to((g / (h * w))[:, None, None], x.shape).copy(),)
    )


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``weight @ x + bias`` for a vector ``x`` of length ``in``; weight is ``out x in``."""
    if x.ndim != 1 or weight.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ValueError(f"linear: weight {weight.shape} incompatible with input {x.shape}")
    y = weight.data @ x.data
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        grads = (weight.data.T @ g, np.outer(g, x.data))
        return grads if bias is None else grads + (g,)

    return _tape.record(out, inputs, vjp)


def charbonnier(pred: Tensor, target, eps: float = 1e-6) -> Tensor:
    """Mean ``sqrt(d^2 + eps^2)``; exactly ``eps`` when ``pred == target``."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"charbonnier: shape mismatch {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    r = np.hypot(d, eps)
    out = Tensor(eps + np.mean(r - eps))
    n = d.size

    def vjp(g):
        gp = g * d / r / n
        return gp, -gp

    return _tape.record(out, (pred, target), vjp)


# -- convolutions ----------------------------------------------------------------

def _check_conv(x: Tensor, weight: Tensor, in_axis: int, name: str) -> None:
    if x.ndim != 3:
        raise ValueError(f"{name}: input must be C x H x W, got {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"{name}: weight must be 4-D with square kernel, got {weight.shape}")
    if weight.shape[in_axis] != x.shape[0]:
        raise ValueError(
            f"{name}: input has {x.shape[0]} channels, weight expects {weight.shape[in_axis]}"
        )


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``C x H x W`` input with ``O x C x k x k`` weight."""
    _check_conv(x, weight, 1, "conv2d")
    c, h, w = x.shape
    o, _, k, _ = weight.shape
    s, p = stride, padding
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {k} with padding {p} does not fit input {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p))) if p else x.data
    cols = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
    y = np.tensordot(weight.data, cols, axes=([1, 2, 3], [0, 3, 4]))  # O x Ho x Wo
    if bias is not None:
        y = y + bias.data[:, None, None]
    out = Tensor(y)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gw = np.tensordot(g, cols, axes=([1, 2], [1, 2]))  # O x C x k x k
        gcols = np.tensordot(weight.data, g, axes=([0], [0]))  # C x k x k x Ho x Wo
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, i:i + s * ho:s, j:j + s * wo:s] += gcols[:, i, j]
        gx = gxp[:, p:p + h, p:p + w] if p else gxp
        grads = (gx, gw)
        return grads if bias is None else grads + (g.sum(axis=(1, 2)),)

    return _tape.record(out, inputs, vjp)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed convolution; weight is ``C_in x C_out x k x k``.

    Output size is ``(H - 1) * stride + k - 2 * padding`` per spatial axis.
    """
    _check_conv(x, weight, 0, "conv_transpose2d")
    c, h, w = x.shape
    _, o, k, _ = weight.shape
    s, p = stride, padding
    hf = (h - 1) * s + k
    wf = (w - 1) * s + k
    if hf - 2 * p < 1 or wf - 2 * p < 1:
        raise ValueError(f"conv_transpose2d: padding {p} too large for input {h}x{w}")
    contrib = np.tensordot(weight.data, x.data, axes=([0], [0]))  # O x k x k x H x W
    yf = np.zeros((o, hf, wf), dtype=x.data.dtype)
    for i in range(k):
        for j in range(k):
            yf[:, i:i + s * h:s, j:j + s * w:s] += contrib[:, i, j]
    y = yf[:, p:hf - p, p:wf - p]
    if bias is not None:
        y = y + bias.data[:, None, None]
    out = Tensor(np.ascontiguousarray(y))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gyf = np.zeros((o, hf, wf), dtype=g.dtype)
        gyf[:, p:hf - p, p:wf - p] = g
        gathered = np.empty((o, k, k, h, w), dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                gathered[:, i, j] = gyf[:, i:i + s * h:s, j:j + s * w:s]
        gx = np.tensordot(weight.data, gathered, axes=([1, 2, 3], [0, 1, 2]))  # C x H x W
        gw = np.tensordot(x.data, gathered, axes=([1, 2], [3, 4]))  # C x O x k x k
        grads = (gx, gw)
        return grads if bias is None else grads + (g.sum(axis=(1, 2)),)

    return _tape.record(out, inputs, vjp)
