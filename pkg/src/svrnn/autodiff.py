"""Tape-based reverse-mode automatic differentiation.

A :class:`Tape` records every operation in creation order, which is already a
topological order, so :meth:`Tape.backward` is a single reverse sweep.  The
layer functions accept either a single example or a leading batch axis::

    tape = Tape()
    w = tape.variable(np.eye(3))
    b = tape.variable(np.zeros(3))
    x = tape.constant(np.ones((10, 3)))
    loss = mse(dense(x, w, b, "tanh"), np.zeros((10, 3)))
    tape.backward(loss)
    w.grad
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError

__all__ = [
    "TapeError",
    "Variable",
    "Tape",
    "GaussianLatent",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "relu",
    "exp",
    "log",
    "square",
    "vsum",
    "vmean",
    "weighted_mean",
    "concat",
    "split",
    "reshape",
    "crop2d",
    "dense",
    "conv2d",
    "conv_transpose2d",
    "conv_output_size",
    "conv_transpose_output_size",
    "layer_norm",
    "kl_to_standard_normal",
    "reparameterize",
    "mse",
    "sse",
]


class TapeError(RuntimeError):
    """Misuse of the tape (mixed tapes, non-scalar loss, double backward)."""


class Variable:
    """A value recorded on a tape, with a lazily materialized gradient."""

    __slots__ = ("value", "tape", "node_id", "requires_grad", "_parents", "_backward", "_grad")

    def __init__(self, value, tape, node_id, requires_grad, parents=(), backward=None):
        self.value = value
        self.tape = tape
        self.node_id = node_id
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self._grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def _accumulate(self, g):
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64)
        else:
            self._grad += g

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Variable(shape={self.value.shape}, node={self.node_id})"


class Tape:
    """Ordered record of operations.

    Nodes are appended as they are created; reverse iteration over the list
    visits each node once, after all of its consumers.
    """

    def __init__(self):
        self.nodes: list[Variable] = []
        self._consumed = False

    def variable(self, value, requires_grad: bool = True) -> Variable:
        value = np.array(value, dtype=np.float64)
        var = Variable(value, self, len(self.nodes), requires_grad)
        self.nodes.append(var)
        return var

    def constant(self, value) -> Variable:
        return self.variable(value, requires_grad=False)

    def record(self, value, parents: Sequence[Variable], backward: Callable) -> Variable:
        for p in parents:
            if p.tape is not self:
                raise TapeError("operands belong to different tapes")
        needs = any(p.requires_grad for p in parents)
        var = Variable(value, self, len(self.nodes), needs, tuple(parents), backward if needs else None)
        self.nodes.append(var)
        return var

    def backward(self, loss: Variable) -> None:
        if loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if loss.value.shape != ():
            raise TapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        if self._consumed:
            raise TapeError("backward already ran on this tape; call reset() first")
        self._consumed = True
        loss._grad = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes[: loss.node_id + 1]):
            if node._backward is None or node._grad is None:
                continue
            grads = node._backward(node._grad)
            for parent, g in zip(node._parents, grads):
                if g is not None and parent.requires_grad:
                    parent._accumulate(g)

    def reset(self) -> None:
        """Clear every gradient so that backward may run again."""
        for node in self.nodes:
            node._grad = None
        self._consumed = False


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Variable):
            return x.tape
    raise TapeError("no Variable operand")


def _lift(tape: Tape, x) -> Variable:
    if isinstance(x, Variable):
        return x
    return tape.constant(x)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Variable:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _same_shape("add", a, b)
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Variable:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _same_shape("sub", a, b)
    return tape.record(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Variable:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return a.tape.record(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Variable, c: float) -> Variable:
    c = float(c)
    return a.tape.record(a.value * c, (a,), lambda g: (g * c,))


def tanh(a: Variable) -> Variable:
    y = np.tanh(a.value)
    return a.tape.record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Variable) -> Variable:
    mask = a.value > 0.0
    return a.tape.record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def exp(a: Variable) -> Variable:
    y = np.exp(a.value)
    return a.tape.record(y, (a,), lambda g: (g * y,))


def log(a: Variable) -> Variable:
    if np.any(a.value <= 0.0):
        raise ValueError("log of non-positive input")
    x = a.value
    return a.tape.record(np.log(x), (a,), lambda g: (g / x,))


def square(a: Variable) -> Variable:
    x = a.value
    return a.tape.record(x * x, (a,), lambda g: (2.0 * g * x,))


# -- reductions and reshaping ------------------------------------------------

def vsum(a: Variable, axis=None) -> Variable:
    x = a.value
    out = np.sum(x, axis=axis)

    def back(g):
        if axis is None:
            return (np.full_like(x, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return a.tape.record(out, (a,), back)


def vmean(a: Variable, axis=None) -> Variable:
    count = a.value.size if axis is None else np.prod([a.value.shape[i] for i in np.atleast_1d(axis)])
    return scale(vsum(a, axis), 1.0 / count)


def weighted_mean(a: Variable, weights) -> Variable:
    """Mean over a 1-D variable of ``weights * a`` (weights are constants)."""
    w = np.asarray(weights, dtype=np.float64)
    if a.value.ndim != 1 or w.shape != a.value.shape:
        raise ShapeError(f"weighted_mean needs matching 1-D shapes: {a.value.shape} vs {w.shape}")
    n = a.value.shape[0]
    return a.tape.record(np.dot(w, a.value) / n, (a,), lambda g: (g * w / n,))


def concat(xs: Sequence[Variable], axis: int = -1) -> Variable:
    tape = _tape_of(*xs)
    xs = [_lift(tape, x) for x in xs]
    out = np.concatenate([x.value for x in xs], axis=axis)
    sizes = [x.value.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return tape.record(out, tuple(xs), back)


def split(a: Variable, sizes: Sequence[int], axis: int = -1) -> list[Variable]:
    if sum(sizes) != a.value.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not sum to extent {a.value.shape[axis]}")
    parts = []
    start = 0
    for size in sizes:
        index = [slice(None)] * a.value.ndim
        index[axis] = slice(start, start + size)
        index = tuple(index)

        def back(g, index=index):
            full = np.zeros_like(a.value)
            full[index] = g
            return (full,)

        parts.append(a.tape.record(a.value[index].copy(), (a,), back))
        start += size
    return parts


def reshape(a: Variable, shape) -> Variable:
    old = a.value.shape
    return a.tape.record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def crop2d(a: Variable, height: int, width: int) -> Variable:
    """Center-crop the two trailing axes to ``height x width``."""
    H, W = a.value.shape[-2:]
    if height > H or width > W:
        raise ShapeError(f"cannot crop {H}x{W} to {height}x{width}")
    top = (H - height) // 2
    left = (W - width) // 2
    index = (..., slice(top, top + height), slice(left, left + width))

    def back(g):
        full = np.zeros_like(a.value)
        full[index] = g
        return (full,)

    return a.tape.record(a.value[index].copy(), (a,), back)


# -- layers ------------------------------------------------------------------

_ACTIVATIONS = {"tanh": tanh, "relu": relu, "none": None, None: None}


def dense(x: Variable, w: Variable, b: Variable, activation: str | None = "none") -> Variable:
    """``activation(w @ x + b)`` for ``x`` of shape ``(n,)`` or ``(batch, n)``."""
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    tape = _tape_of(x, w, b)
    x, w, b = _lift(tape, x), _lift(tape, w), _lift(tape, b)
    W, B, X = w.value, b.value, x.value
    if W.ndim != 2 or B.shape != (W.shape[0],) or X.shape[-1:] != (W.shape[1],) or X.ndim > 2:
        raise ShapeError(f"dense shape mismatch: x {X.shape}, w {W.shape}, b {B.shape}")
    out = X @ W.T + B

    def back(g):
        if X.ndim == 1:
            return g @ W, np.outer(g, X), g
        return g @ W, g.T @ X, g.sum(axis=0)

    y = tape.record(out, (x, w, b), back)
    act = _ACTIVATIONS[activation]
    return act(y) if act is not None else y


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int,
                               output_padding: int = 0) -> int:
    return (size - 1) * stride - 2 * padding + kernel + output_padding


def _batched(x: np.ndarray, ndim: int):
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise ShapeError(f"expected {ndim}-D input or batch thereof, got shape {x.shape}")


def conv2d(x: Variable, kernels: Variable, bias: Variable | None = None,
           stride: int = 1, padding: int = 0) -> Variable:
    """2-D cross-correlation with zero padding.

    ``x`` is ``(C, H, W)`` or ``(B, C, H, W)``; ``kernels`` is ``(F, C, k, k)``.
    """
    tape = _tape_of(x, kernels)
    x, kernels = _lift(tape, x), _lift(tape, kernels)
    parents = [x, kernels]
    if bias is not None:
        bias = _lift(tape, bias)
        parents.append(bias)
    X, single = _batched(x.value, 3)
    K = kernels.value
    F, C, k, k2 = K.shape
    if k != k2 or X.shape[1] != C:
        raise ShapeError(f"conv2d shape mismatch: x {x.value.shape}, kernels {K.shape}")
    if bias is not None and bias.value.shape != (F,):
        raise ShapeError(f"conv2d bias shape {bias.value.shape} != ({F},)")
    Bn, _, H, W = X.shape
    Ho = conv_output_size(H, k, stride, padding)
    Wo = conv_output_size(W, k, stride, padding)
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d output extent {Ho}x{Wo} is not positive")
    Xp = np.pad(X, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(Xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(Bn * Ho * Wo, C * k * k)
    Kmat = K.reshape(F, C * k * k)
    out = (cols @ Kmat.T).reshape(Bn, Ho, Wo, F).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.value[None, :, None, None]
    out = np.ascontiguousarray(out)

    def back(g):
        g = g[None] if single else g
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, F)
        gK = (g2.T @ cols).reshape(K.shape)
        gcols = (g2 @ Kmat).reshape(Bn, Ho, Wo, C, k, k).transpose(0, 3, 1, 2, 4, 5)
        gXp = np.zeros_like(Xp)
        for i in range(k):
            for j in range(k):
                gXp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += gcols[..., i, j]
        gX = gXp[:, :, padding:padding + H, padding:padding + W]
        if single:
            gX = gX[0]
        grads = [gX, gK]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return tape.record(out[0] if single else out, tuple(parents), back)


def conv_transpose2d(x: Variable, kernels: Variable, bias: Variable | None = None,
                     stride: int = 1, padding: int = 0, output_padding: int = 0) -> Variable:
    """Transposed convolution, the adjoint of :func:`conv2d` in ``x``.

    ``kernels`` is ``(C_in, C_out, k, k)``; with the same array used as the
    ``(F, C, k, k)`` kernels of a convolution, the two maps are adjoint.
    """
    tape = _tape_of(x, kernels)
    x, kernels = _lift(tape, x), _lift(tape, kernels)
    parents = [x, kernels]
    if bias is not None:
        bias = _lift(tape, bias)
        parents.append(bias)
    X, single = _batched(x.value, 3)
    K = kernels.value
    Ci, Co, k, k2 = K.shape
    if k != k2 or X.shape[1] != Ci:
        raise ShapeError(f"conv_transpose2d shape mismatch: x {x.value.shape}, kernels {K.shape}")
    if not 0 <= output_padding < stride:
        raise ShapeError("output_padding must lie in [0, stride)")
    if bias is not None and bias.value.shape != (Co,):
        raise ShapeError(f"conv_transpose2d bias shape {bias.value.shape} != ({Co},)")
    Bn, _, H, W = X.shape
    Ho = conv_transpose_output_size(H, k, stride, padding, output_padding)
    Wo = conv_transpose_output_size(W, k, stride, padding, output_padding)
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv_transpose2d output extent {Ho}x{Wo} is not positive")
    full_h = max((H - 1) * stride + k, padding + Ho)
    full_w = max((W - 1) * stride + k, padding + Wo)
    X2 = X.transpose(0, 2, 3, 1).reshape(-1, Ci)
    Kmat = K.reshape(Ci, Co * k * k)
    contrib = (X2 @ Kmat).reshape(Bn, H, W, Co, k, k).transpose(0, 3, 1, 2, 4, 5)
    full = np.zeros((Bn, Co, full_h, full_w))
    for i in range(k):
        for j in range(k):
            full[:, :, i:i + stride * H:stride, j:j + stride * W:stride] += contrib[..., i, j]
    out = full[:, :, padding:padding + Ho, padding:padding + Wo]
    if bias is not None:
        out = out + bias.value[None, :, None, None]

    def back(g):
        g = g[None] if single else g
        gfull = np.zeros((Bn, Co, full_h, full_w))
        gfull[:, :, padding:padding + Ho, padding:padding + Wo] = g
        win = sliding_window_view(gfull, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :H, :W]
        gcols = win.transpose(0, 2, 3, 1, 4, 5).reshape(Bn * H * W, Co * k * k)
        gX = (gcols @ Kmat.T).reshape(Bn, H, W, Ci).transpose(0, 3, 1, 2)
        gK = (X2.T @ gcols).reshape(K.shape)
        grads = [gX[0] if single else np.ascontiguousarray(gX), gK]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    out = out[0] if single else np.ascontiguousarray(out)
    return tape.record(out, tuple(parents), back)


def layer_norm(x: Variable, gain: Variable, bias: Variable, eps: float = 1e-5) -> Variable:
    """Normalize over the last axis, then apply ``gain`` and ``bias``."""
    tape = _tape_of(x, gain, bias)
    x, gain, bias = _lift(tape, x), _lift(tape, gain), _lift(tape, bias)
    d = x.value.shape[-1]
    if gain.value.shape != (d,) or bias.value.shape != (d,):
        raise ShapeError(f"layer_norm parameter shapes {gain.value.shape}, {bias.value.shape} != ({d},)")
    X = x.value
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    G = gain.value
    out = xhat * G + bias.value

    def back(g):
        gxhat = g * G
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(X.ndim - 1))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return tape.record(out, (x, gain, bias), back)


# -- variational pieces ------------------------------------------------------

@dataclass
class GaussianLatent:
    """Diagonal Gaussian ``N(mu, diag(exp(log_var)))`` over the last axis."""

    mu: Variable
    log_var: Variable

    def __post_init__(self):
        if self.mu.value.shape != self.log_var.value.shape:
            raise ShapeError(f"mu {self.mu.value.shape} and log_var {self.log_var.value.shape} differ")

    @property
    def dim(self) -> int:
        return self.mu.value.shape[-1]


def kl_to_standard_normal(q: GaussianLatent) -> Variable:
    """``KL(q || N(0, I))`` summed over the last axis.

    Returns a scalar for an unbatched latent, a ``(batch,)`` vector otherwise.
    """
    tape = _tape_of(q.mu, q.log_var)
    mu, lv = q.mu.value, q.log_var.value
    ev = np.exp(lv)
    out = 0.5 * np.sum(mu * mu + ev - lv - 1.0, axis=-1)

    def back(g):
        g = np.expand_dims(g, -1)
        return g * mu, 0.5 * g * (ev - 1.0)

    return tape.record(out, (q.mu, q.log_var), back)


def reparameterize(q: GaussianLatent, eps) -> Variable:
    """``mu + exp(log_var / 2) * eps``; ``eps`` is treated as a constant."""
    eps = np.asarray(eps.value if isinstance(eps, Variable) else eps, dtype=np.float64)
    if eps.shape != q.mu.value.shape:
        raise ShapeError(f"eps shape {eps.shape} != latent shape {q.mu.value.shape}")
    sd = np.exp(0.5 * q.log_var.value)
    out = q.mu.value + sd * eps
    return q.mu.tape.record(out, (q.mu, q.log_var), lambda g: (g, 0.5 * g * sd * eps))


def mse(x: Variable, y) -> Variable:
    """Mean of squared differences over every element."""
    Y = np.asarray(y.value if isinstance(y, Variable) else y, dtype=np.float64)
    if Y.shape != x.value.shape:
        raise ShapeError(f"mse shape mismatch: {x.value.shape} vs {Y.shape}")
    diff = x.value - Y
    n = diff.size
    return x.tape.record(np.sum(diff * diff) / n, (x,), lambda g: (2.0 * g * diff / n,))


def sse(x: Variable, y) -> Variable:
    """Squared error summed within each datum, averaged over the leading batch axis."""
    Y = np.asarray(y.value if isinstance(y, Variable) else y, dtype=np.float64)
    if Y.shape != x.value.shape:
        raise ShapeError(f"sse shape mismatch: {x.value.shape} vs {Y.shape}")
    if Y.ndim < 2:
        raise ShapeError("sse needs a leading batch axis")
    diff = x.value - Y
    b = diff.shape[0]
    return x.tape.record(np.sum(diff * diff) / b, (x,), lambda g: (2.0 * g * diff / b,))
