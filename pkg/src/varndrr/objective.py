"""Variational lower bound and its exact gradients.

Per instance ``(x1, x2, y)`` the objective maximized during training is::

    -KL(q(z|x,y) || q'(z|x)) + 1/L sum_l [log p(x|z_l) + log p(y|z_l)],
    z_l = mu + sigma * eps_l

The KL between the two diagonal Gaussians is analytic, so its gradient
reaches both the posterior and the prior network.  The reconstruction part
reaches the posterior through ``z_l`` and every generative weight.

Gradients are ascent directions of the minibatch *mean* objective, keyed by
the canonical names of ``ModelParams.named_arrays()``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ModelParams,
    GaussianParams,
    _decode_arguments_forward,
    _decode_relation_forward,
    _posterior_forward,
    _prior_forward,
)
from .numerics import DTYPE, ShapeError, check_finite, sample_standard_gaussian, sigmoid_vec, softmax_vec

PROB_CLAMP = 1e-10

Gradients = dict  # canonical parameter name -> ndarray, same shape as the parameter


@dataclass(frozen=True)
class ElboBreakdown:
    kl_term: float
    recon_x_term: float
    recon_y_term: float
    total: float


def kl_diag_gaussians(q: GaussianParams, p: GaussianParams) -> float | np.ndarray:
    """KL(q || p) for diagonal Gaussians, summed over the last axis."""
    if np.shape(q.mu) != np.shape(p.mu) or np.shape(q.log_var) != np.shape(p.log_var):
        raise ShapeError(f"kl: q{np.shape(q.mu)} vs p{np.shape(p.mu)}")
    diff = q.mu - p.mu
    d = q.log_var - p.log_var
    # expm1(d) - d >= 0 and is exactly 0 at d == 0
    terms = np.expm1(d) - d + diff * diff * np.exp(-p.log_var)
    return 0.5 * terms.sum(axis=-1)


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _bernoulli_ll(x, p):
    pc = _clamp(p)
    return (x * np.log(pc) + (1.0 - x) * np.log1p(-pc)).sum(axis=-1)


def log_px_given_z(x1, x2, x1p, x2p):
    """Multivariate Bernoulli log-likelihood of both bag-of-words vectors."""
    return _bernoulli_ll(x1, x1p) + _bernoulli_ll(x2, x2p)


def log_py_given_z(y, yp):
    return (y * np.log(_clamp(yp))).sum(axis=-1)


def _unclamped(p):
    return ((p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)).astype(DTYPE)


def batch_elbo_and_gradients(params: ModelParams, X1, X2, Y, eps) -> tuple[ElboBreakdown, np.ndarray, Gradients]:
    """Mean objective over the rows of ``X1, X2, Y`` and its gradient.

    ``eps`` has shape ``(L, B, d_z)``.  Returns the mean breakdown, the
    per-row totals, and the gradients.
    """
    X1, X2, Y = (np.atleast_2d(np.asarray(a, dtype=DTYPE)) for a in (X1, X2, Y))
    eps = np.asarray(eps, dtype=DTYPE)
    B = X1.shape[0]
    if eps.ndim != 3 or eps.shape[1] != B or eps.shape[2] != params.dims.d_z:
        raise ShapeError(f"eps must be (L, {B}, {params.dims.d_z}), got {eps.shape}")
    L = eps.shape[0]
    th, post, prior = params.theta, params.phi.posterior, params.phi.prior

    h1, h2, hy, mq, lvq = _posterior_forward(post, X1, X2, Y)
    g1, g2, mp, lvp = _prior_forward(prior, X1, X2)
    check_finite(posterior_mu=mq, posterior_log_var=lvq, prior_mu=mp, prior_log_var=lvp)

    kl = kl_diag_gaussians(GaussianParams(mq, lvq), GaussianParams(mp, lvp))
    sigma = np.exp(0.5 * lvq)
    inv_vp = np.exp(-lvp)
    diff = mq - mp

    scale = 1.0 / B
    gr = {name: np.zeros_like(arr) for name, arr in params.all_fields()}

    # d(-KL)
    g_mq = -diff * inv_vp * scale
    g_lvq = 0.5 * (1.0 - np.exp(lvq) * inv_vp) * scale
    g_mp = diff * inv_vp * scale
    g_lvp = -0.5 * (1.0 - (np.exp(lvq) + diff * diff) * inv_vp) * scale

    recon_x = np.zeros(B)
    recon_y = np.zeros(B)
    up = scale / L
    for l in range(L):
        z = mq + sigma * eps[l]
        d1, d2, a1, a2 = _decode_arguments_forward(th, z)
        hidden, logits = _decode_relation_forward(th, z)
        check_finite(z=z, x1_logits=a1, x2_logits=a2, y_logits=logits)
        p1, p2 = sigmoid_vec(a1), sigmoid_vec(a2)
        yp = softmax_vec(logits)
        recon_x += log_px_given_z(X1, X2, p1, p2)
        recon_y += log_py_given_z(Y, yp)

        g_z = np.zeros_like(z)
        for X, p, d, W_h, W_x, sfx in ((X1, p1, d1, th.W_h1p, th.W_x1p, "1"),
                                       (X2, p2, d2, th.W_h2p, th.W_x2p, "2")):
            g_a = (X - p) * _unclamped(p) * up
            gr[f"theta.W_x{sfx}p"] += g_a.T @ d
            gr[f"theta.b_x{sfx}p"] += g_a.sum(0)
            g_pre = (g_a @ W_x) * (1.0 - d * d)
            gr[f"theta.W_h{sfx}p"] += g_pre.T @ z
            gr[f"theta.b_h{sfx}p"] += g_pre.sum(0)
            g_z += g_pre @ W_h

        m = Y * _unclamped(yp)
        g_logits = (m - yp * m.sum(axis=-1, keepdims=True)) * up
        gr["theta.W_yp"] += g_logits.T @ hidden[-1]
        gr["theta.b_yp"] += g_logits.sum(0)
        g_h = g_logits @ th.W_yp
        for k in range(len(hidden) - 1, -1, -1):
            g_pre = g_h * (1.0 - hidden[k] ** 2)
            below = hidden[k - 1] if k > 0 else z
            gr[f"theta.W_m{k + 1}"] += g_pre.T @ below
            gr[f"theta.b_m{k + 1}"] += g_pre.sum(0)
            g_h = g_pre @ th.W_m[k]
        g_z += g_h

        g_mq += g_z
        g_lvq += g_z * eps[l] * 0.5 * sigma

    recon_x /= L
    recon_y /= L

    # posterior network
    pp = "phi.posterior."
    g_h = {}
    for key, h in (("1", h1), ("2", h2), ("y", hy)):
        gr[pp + f"W_mu{key}"] += g_mq.T @ h
        gr[pp + f"W_sig{key}"] += g_lvq.T @ h
        g_h[key] = g_mq @ getattr(post, f"W_mu{key}") + g_lvq @ getattr(post, f"W_sig{key}")
    gr[pp + "b_mu"] += g_mq.sum(0)
    gr[pp + "b_sig"] += g_lvq.sum(0)
    for key, h, inp in (("1", h1, X1), ("2", h2, X2), ("y", hy, Y)):
        g_pre = g_h[key] * (1.0 - h * h)
        gr[pp + f"W_h{key}"] += g_pre.T @ inp
        gr[pp + f"b_h{key}"] += g_pre.sum(0)

    # prior network
    pq = "phi.prior."
    for key, g, inp in (("1", g1, X1), ("2", g2, X2)):
        gr[pq + f"W_mu{key}"] += g_mp.T @ g
        gr[pq + f"W_sig{key}"] += g_lvp.T @ g
        g_pre = (g_mp @ getattr(prior, f"W_mu{key}") + g_lvp @ getattr(prior, f"W_sig{key}")) * (1.0 - g * g)
        gr[pq + f"W_h{key}"] += g_pre.T @ inp
        gr[pq + f"b_h{key}"] += g_pre.sum(0)
    gr[pq + "b_mu"] += g_mp.sum(0)
    gr[pq + "b_sig"] += g_lvp.sum(0)

    totals = -kl + recon_x + recon_y
    check_finite(elbo=totals)
    grads = params.collect(gr)
    check_finite(**{f"grad[{k}]": v for k, v in grads.items()})
    breakdown = ElboBreakdown(kl_term=float(kl.mean()), recon_x_term=float(recon_x.mean()),
                              recon_y_term=float(recon_y.mean()), total=float(totals.mean()))
    return breakdown, totals, grads


def sample_eps(rng: np.random.Generator, L: int, batch: int, d_z: int) -> np.ndarray:
    """Noise of shape (L, batch, d_z); fresh per instance and per sample."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    return sample_standard_gaussian(rng, (L, batch, d_z))


def elbo_and_gradients(params: ModelParams, inst, rng: np.random.Generator | None = None,
                       L: int = 1, eps=None) -> tuple[ElboBreakdown, Gradients]:
    """Objective and ascent gradient for one encoded instance.

    Pass ``eps`` of shape ``(L, d_z)`` to pin the noise (e.g. for finite
    differences); otherwise it is drawn from ``rng``.
    """
    if eps is None:
        eps = sample_eps(rng, L, 1, params.dims.d_z)
    else:
        eps = np.asarray(eps, dtype=DTYPE).reshape(-1, 1, params.dims.d_z)
    breakdown, _, grads = batch_elbo_and_gradients(params, inst.x1, inst.x2, inst.y, eps)
    return breakdown, grads
