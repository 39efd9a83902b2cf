"""Dense float64 primitives and seeded sampling.

Vectors and matrices are plain ``numpy.ndarray`` objects in float64.  Every
function that takes a vector also accepts a 2-D batch whose rows are
independent vectors; this is how the trainer evaluates whole minibatches.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes do not line up."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf showed up where only finite values are allowed."""


def as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


def affine(W: np.ndarray, v: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``W @ v + b``; ``v`` may be a vector or a batch of row vectors."""
    W, v, b = as_array(W), as_array(v), as_array(b)
    if W.ndim != 2 or b.ndim != 1 or v.ndim not in (1, 2):
        raise ShapeError(f"affine: bad ranks W{W.shape} v{v.shape} b{b.shape}")
    if W.shape[1] != v.shape[-1] or W.shape[0] != b.shape[0]:
        raise ShapeError(f"affine: W{W.shape} cannot map v{v.shape} onto b{b.shape}")
    return v @ W.T + b


def tanh_vec(v: np.ndarray) -> np.ndarray:
    return np.tanh(as_array(v))


def sigmoid_vec(v: np.ndarray) -> np.ndarray:
    # exp(-|v|) never overflows
    v = as_array(v)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax_vec(v: np.ndarray) -> np.ndarray:
    v = as_array(v)
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``.

    Streams with different keys are statistically independent and never
    depend on how many draws were taken from any other stream.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def sample_standard_gaussian(rng: np.random.Generator, dim: int | tuple[int, ...]) -> np.ndarray:
    shape = (dim,) if np.isscalar(dim) else tuple(dim)
    if len(shape) == 0 or min(shape) < 1:
        raise ValueError(f"sample_standard_gaussian: dim must be >= 1, got {dim!r}")
    return rng.standard_normal(shape, dtype=DTYPE)


def check_finite(**arrays) -> None:
    """Raise NonFiniteError naming the first array holding NaN/Inf."""
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values in {name}")
