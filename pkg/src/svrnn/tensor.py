"""Dense float64 arrays, strict shape algebra and seeded random streams.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  The helpers in
this module refuse implicit broadcasting: binary operations require equal
shapes or a Python scalar operand.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "as_tensor",
    "matmul",
    "elementwise",
    "reduce",
    "RngStream",
    "rng_normal",
]

UNARY_KINDS = ("tanh", "relu", "exp", "log")
BINARY_KINDS = ("add", "sub", "mul", "scale")


class ShapeError(ValueError):
    """Operand shapes do not conform."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Copy ``data`` into a C-contiguous float64 array, optionally reshaped."""
    arr = np.array(data, dtype=np.float64, order="C")
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot view {arr.size} elements as shape {shape}")
        arr = arr.reshape(shape)
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def elementwise(kind: str, a: np.ndarray, b=None) -> np.ndarray:
    """Pointwise ``kind`` applied to ``a`` (and ``b`` for binary kinds).

    ``scale`` multiplies by a Python scalar.  ``add``/``sub``/``mul`` accept
    either a scalar or an array of exactly the same shape.
    """
    a = np.asarray(a, dtype=np.float64)
    if kind in UNARY_KINDS:
        if b is not None:
            raise TypeError(f"{kind} takes a single operand")
        if kind == "tanh":
            return np.tanh(a)
        if kind == "relu":
            return np.maximum(a, 0.0)
        if kind == "exp":
            return np.exp(a)
        if np.any(a <= 0.0):
            raise ValueError("log of non-positive input")
        return np.log(a)
    if kind not in BINARY_KINDS:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    if b is None:
        raise TypeError(f"{kind} needs a second operand")
    if kind == "scale":
        if not np.isscalar(b):
            raise TypeError("scale takes a scalar factor")
        return a * float(b)
    if not np.isscalar(b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != a.shape:
            raise ShapeError(f"{kind} shape mismatch: {a.shape} vs {b.shape}")
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    return a * b


def reduce(kind: str, a: np.ndarray, axes=None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if axes is not None:
        axes = (axes,) if np.isscalar(axes) else tuple(axes)
        for ax in axes:
            if not -a.ndim <= ax < a.ndim:
                raise ValueError(f"axis {ax} out of range for shape {a.shape}")
            if a.shape[ax] == 0:
                raise ValueError("empty reduction axis")
    elif a.size == 0:
        raise ValueError("empty reduction axis")
    if kind == "sum":
        return np.sum(a, axis=axes)
    if kind == "mean":
        return np.mean(a, axis=axes)
    if kind == "max":
        return np.max(a, axis=axes)
    raise ValueError(f"unknown reduction {kind!r}")


class RngStream:
    """Deterministic random stream keyed by ``(seed, stream_id...)``.

    Backed by numpy's PCG64 bit generator seeded through ``SeedSequence``
    with the stream path as spawn key, so sibling streams never share state
    and a given key always yields the same draws on every platform.
    """

    def __init__(self, seed: int, *stream_id: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream_id = tuple(int(s) for s in stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *stream_id: int) -> "RngStream":
        return RngStream(self.seed, *self.stream_id, *stream_id)

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        if std < 0:
            raise ValueError("negative standard deviation")
        draws = self._gen.standard_normal(shape)
        return mean + std * draws

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=False)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def rng_normal(stream: RngStream, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    """I.i.d. normal draws; ``std == 0`` gives a constant array of ``mean``."""
    if std < 0:
        raise ValueError("negative standard deviation")
    out = stream.normal(shape, mean, std)
    return np.asarray(out, dtype=np.float64)
