"""Adam, run as gradient *ascent* on the variational bound."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import NonFiniteError, ShapeError


@dataclass
class AdamState:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def hyperparams(self) -> dict:
        return {"alpha": self.alpha, "beta1": self.beta1, "beta2": self.beta2, "eps_hat": self.eps_hat}


def adam_step(params, grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """Move every trainable array of ``params`` uphill along ``grads``, in place.

    ``params`` is anything with ``named_arrays()`` (a ModelParams) or a plain
    ``{name: ndarray}`` dict.  Tied arrays appear once in the enumeration and
    therefore get exactly one update.
    """
    named = params.named_arrays() if hasattr(params, "named_arrays") else list(params.items())
    for name, arr in named:
        g = grads.get(name)
        if g is None or np.shape(g) != arr.shape:
            raise ShapeError(f"gradient for {name}: expected {arr.shape}, got {None if g is None else np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, arr in named:
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        arr += state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps_hat)
    return state
