"""Parameters and forward passes of the recognizer and the two approximators.

Generative side (theta)::

    h1' = tanh(W_h1p z + b_h1p)          x1' = sigmoid(W_x1p h1' + b_x1p)
    h2' = tanh(W_h2p z + b_h2p)          x2' = sigmoid(W_x2p h2' + b_x2p)
    y'  = softmax(W_yp MLP(z) + b_yp),   MLP = 4 tanh layers (d_z->d_m, then d_m->d_m)

Approximators (phi), posterior shown; the prior drops every ``y`` term and
has its own weights::

    h1 = tanh(W_h1 x1 + b_h1)    h2 = tanh(W_h2 x2 + b_h2)    hy = tanh(W_hy y + b_hy)
    mu      = W_mu1 h1 + W_mu2 h2 + W_muy hy + b_mu
    log_var = W_sig1 h1 + W_sig2 h2 + W_sigy hy + b_sig

Tied weights (``W_h1``/``W_h2`` of the posterior, ``W_x1p``/``W_x2p``) are the
same ndarray object, so an in-place update of one is an update of both and
their gradients land in a single slot.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .numerics import DTYPE, ShapeError, affine, sigmoid_vec, softmax_vec, tanh_vec

N_MLP_LAYERS = 4
INIT_STD = 0.01


@dataclass(frozen=True)
class DimensionsConfig:
    d_z: int = 20
    d_x1: int = 10001
    d_x2: int = 10001
    d_h1: int = 400
    d_h2: int = 400
    d_hy: int = 400
    d_h1p: int = 400
    d_h2p: int = 400
    d_m: int = 400
    d_y: int = 2
    tie: bool = True

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name != "tie" and getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be >= 1, got {getattr(self, f.name)}")
        if self.tie and (self.d_x1 != self.d_x2 or self.d_h1 != self.d_h2
                         or self.d_h1p != self.d_h2p):
            raise ValueError("tying needs d_x1 == d_x2, d_h1 == d_h2 and d_h1p == d_h2p")

    @classmethod
    def uniform(cls, d_z: int = 20, d_x: int = 10001, hidden: int = 400,
                d_y: int = 2, tie: bool = True) -> "DimensionsConfig":
        """Same size for every hidden layer, as in the published setup."""
        return cls(d_z=d_z, d_x1=d_x, d_x2=d_x, d_h1=hidden, d_h2=hidden, d_hy=hidden,
                   d_h1p=hidden, d_h2p=hidden, d_m=hidden, d_y=d_y, tie=tie)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class GaussianParams:
    mu: np.ndarray
    log_var: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)


@dataclass
class GenerativeParams:
    W_h1p: np.ndarray
    b_h1p: np.ndarray
    W_h2p: np.ndarray
    b_h2p: np.ndarray
    W_x1p: np.ndarray
    b_x1p: np.ndarray
    W_x2p: np.ndarray
    b_x2p: np.ndarray
    W_m: list[np.ndarray]
    b_m: list[np.ndarray]
    W_yp: np.ndarray
    b_yp: np.ndarray


@dataclass
class PosteriorParams:
    W_h1: np.ndarray
    b_h1: np.ndarray
    W_h2: np.ndarray
    b_h2: np.ndarray
    W_hy: np.ndarray
    b_hy: np.ndarray
    W_mu1: np.ndarray
    W_mu2: np.ndarray
    W_muy: np.ndarray
    b_mu: np.ndarray
    W_sig1: np.ndarray
    W_sig2: np.ndarray
    W_sigy: np.ndarray
    b_sig: np.ndarray


@dataclass
class PriorParams:
    W_h1: np.ndarray
    b_h1: np.ndarray
    W_h2: np.ndarray
    b_h2: np.ndarray
    W_mu1: np.ndarray
    W_mu2: np.ndarray
    b_mu: np.ndarray
    W_sig1: np.ndarray
    W_sig2: np.ndarray
    b_sig: np.ndarray


@dataclass
class ApproximatorParams:
    posterior: PosteriorParams
    prior: PriorParams


def _iter_fields(obj, prefix: str) -> Iterator[tuple[str, np.ndarray]]:
    for f in dataclasses.fields(obj):
        val = getattr(obj, f.name)
        if isinstance(val, list):
            for i, arr in enumerate(val):
                yield f"{prefix}{f.name}{i + 1}", arr
        elif dataclasses.is_dataclass(val):
            yield from _iter_fields(val, f"{prefix}{f.name}.")
        else:
            yield f"{prefix}{f.name}", val


@dataclass
class ModelParams:
    theta: GenerativeParams
    phi: ApproximatorParams
    dims: DimensionsConfig = field(default_factory=DimensionsConfig)

    def all_fields(self) -> list[tuple[str, np.ndarray]]:
        """Every parameter slot, tied aliases included."""
        return list(_iter_fields(self.theta, "theta.")) + list(_iter_fields(self.phi, "phi."))

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Trainable arrays in a fixed order, each tied group listed once under its first name."""
        seen: set[int] = set()
        out = []
        for name, arr in self.all_fields():
            if id(arr) not in seen:
                seen.add(id(arr))
                out.append((name, arr))
        return out

    def canonical_names(self) -> dict[str, str]:
        """Map every slot name to the name of the array that backs it."""
        first: dict[int, str] = {}
        out = {}
        for name, arr in self.all_fields():
            out[name] = first.setdefault(id(arr), name)
        return out

    def collect(self, slot_grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Sum per-slot gradients into one accumulator per trainable array."""
        grads: dict[str, np.ndarray] = {}
        for slot, canon in self.canonical_names().items():
            g = slot_grads[slot]
            if canon in grads:
                grads[canon] = grads[canon] + g
            else:
                grads[canon] = np.array(g, dtype=DTYPE, copy=True)
        return grads

    def copy(self) -> "ModelParams":
        """Deep copy that keeps the tying structure."""
        source = dict(self.all_fields())
        return build_params(self.dims, lambda name, shape: source[name].copy())

    def n_parameters(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


def param_shapes(dims: DimensionsConfig) -> dict[str, tuple[int, ...]]:
    """Shape of every slot (aliases included) keyed by slot name."""
    d = dims
    s = {
        "theta.W_h1p": (d.d_h1p, d.d_z), "theta.b_h1p": (d.d_h1p,),
        "theta.W_h2p": (d.d_h2p, d.d_z), "theta.b_h2p": (d.d_h2p,),
        "theta.W_x1p": (d.d_x1, d.d_h1p), "theta.b_x1p": (d.d_x1,),
        "theta.W_x2p": (d.d_x2, d.d_h2p), "theta.b_x2p": (d.d_x2,),
    }
    for i in range(1, N_MLP_LAYERS + 1):
        s[f"theta.W_m{i}"] = (d.d_m, d.d_z if i == 1 else d.d_m)
    for i in range(1, N_MLP_LAYERS + 1):
        s[f"theta.b_m{i}"] = (d.d_m,)
    s["theta.W_yp"] = (d.d_y, d.d_m)
    s["theta.b_yp"] = (d.d_y,)
    for part in ("posterior", "prior"):
        p = f"phi.{part}."
        s[p + "W_h1"] = (d.d_h1, d.d_x1)
        s[p + "b_h1"] = (d.d_h1,)
        s[p + "W_h2"] = (d.d_h2, d.d_x2)
        s[p + "b_h2"] = (d.d_h2,)
        if part == "posterior":
            s[p + "W_hy"] = (d.d_hy, d.d_y)
            s[p + "b_hy"] = (d.d_hy,)
        for head, bias in (("mu", "b_mu"), ("sig", "b_sig")):
            s[p + f"W_{head}1"] = (d.d_z, d.d_h1)
            s[p + f"W_{head}2"] = (d.d_z, d.d_h2)
            if part == "posterior":
                s[p + f"W_{head}y"] = (d.d_z, d.d_hy)
            s[p + bias] = (d.d_z,)
    return s


# slot -> slot it is an alias of, when tying is on
TIED_SLOTS = {
    "theta.W_x2p": "theta.W_x1p",
    "phi.posterior.W_h2": "phi.posterior.W_h1",
}


def build_params(dims: DimensionsConfig,
                 fill: Callable[[str, tuple[int, ...]], np.ndarray | None]) -> ModelParams:
    """Assemble a ModelParams, calling ``fill(name, shape)`` once per trainable array."""
    shapes = param_shapes(dims)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        if dims.tie and name in TIED_SLOTS:
            arrays[name] = arrays[TIED_SLOTS[name]]
            continue
        arr = fill(name, shape)
        arr = np.zeros(shape, dtype=DTYPE) if arr is None else np.asarray(arr, dtype=DTYPE)
        if arr.shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
        arrays[name] = arr

    def group(prefix: str, cls):
        names = [f.name for f in dataclasses.fields(cls)]
        return cls(**{n: arrays[prefix + n] for n in names})

    theta = GenerativeParams(
        **{n: arrays["theta." + n] for n in
           ("W_h1p", "b_h1p", "W_h2p", "b_h2p", "W_x1p", "b_x1p", "W_x2p", "b_x2p", "W_yp", "b_yp")},
        W_m=[arrays[f"theta.W_m{i}"] for i in range(1, N_MLP_LAYERS + 1)],
        b_m=[arrays[f"theta.b_m{i}"] for i in range(1, N_MLP_LAYERS + 1)],
    )
    phi = ApproximatorParams(
        posterior=group("phi.posterior.", PosteriorParams),
        prior=group("phi.prior.", PriorParams),
    )
    return ModelParams(theta=theta, phi=phi, dims=dims)


def init_params(dims: DimensionsConfig, rng: np.random.Generator, std: float = INIT_STD) -> ModelParams:
    """Every weight and bias drawn i.i.d. from N(0, std^2); tied arrays drawn once."""
    return build_params(dims, lambda name, shape: rng.normal(0.0, std, size=shape))


def zero_params(dims: DimensionsConfig) -> ModelParams:
    return build_params(dims, lambda name, shape: None)


# ---------------------------------------------------------------------------
# forward passes; the underscore variants also hand back hidden activations
# for the backward pass in ``objective``.

def _posterior_forward(post: PosteriorParams, x1, x2, y):
    h1 = tanh_vec(affine(post.W_h1, x1, post.b_h1))
    h2 = tanh_vec(affine(post.W_h2, x2, post.b_h2))
    hy = tanh_vec(affine(post.W_hy, y, post.b_hy))
    mu = h1 @ post.W_mu1.T + h2 @ post.W_mu2.T + hy @ post.W_muy.T + post.b_mu
    lv = h1 @ post.W_sig1.T + h2 @ post.W_sig2.T + hy @ post.W_sigy.T + post.b_sig
    return h1, h2, hy, mu, lv


def _prior_forward(prior: PriorParams, x1, x2):
    g1 = tanh_vec(affine(prior.W_h1, x1, prior.b_h1))
    g2 = tanh_vec(affine(prior.W_h2, x2, prior.b_h2))
    mu = g1 @ prior.W_mu1.T + g2 @ prior.W_mu2.T + prior.b_mu
    lv = g1 @ prior.W_sig1.T + g2 @ prior.W_sig2.T + prior.b_sig
    return g1, g2, mu, lv


def _decode_arguments_forward(theta: GenerativeParams, z):
    d1 = tanh_vec(affine(theta.W_h1p, z, theta.b_h1p))
    d2 = tanh_vec(affine(theta.W_h2p, z, theta.b_h2p))
    a1 = affine(theta.W_x1p, d1, theta.b_x1p)
    a2 = affine(theta.W_x2p, d2, theta.b_x2p)
    return d1, d2, a1, a2


def _decode_relation_forward(theta: GenerativeParams, z):
    hidden = []
    h = z
    for W, b in zip(theta.W_m, theta.b_m):
        h = tanh_vec(affine(W, h, b))
        hidden.append(h)
    logits = affine(theta.W_yp, h, theta.b_yp)
    return hidden, logits


def encode_posterior(phi: ApproximatorParams, x1, x2, y) -> GaussianParams:
    *_, mu, lv = _posterior_forward(phi.posterior, x1, x2, y)
    return GaussianParams(mu, lv)


def encode_prior(phi: ApproximatorParams, x1, x2) -> GaussianParams:
    *_, mu, lv = _prior_forward(phi.prior, x1, x2)
    return GaussianParams(mu, lv)


def reparameterize(g: GaussianParams, eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps, dtype=DTYPE)
    if eps.shape[-1] != g.mu.shape[-1]:
        raise ShapeError(f"eps{eps.shape} does not match mu{g.mu.shape}")
    return g.mu + g.sigma * eps


def decode_arguments(theta: GenerativeParams, z) -> tuple[np.ndarray, np.ndarray]:
    _, _, a1, a2 = _decode_arguments_forward(theta, z)
    return sigmoid_vec(a1), sigmoid_vec(a2)


def decode_relation(theta: GenerativeParams, z) -> np.ndarray:
    _, logits = _decode_relation_forward(theta, z)
    return softmax_vec(logits)
