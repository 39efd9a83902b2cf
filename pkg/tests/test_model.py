import numpy as np
import pytest

from varndrr.checkpoint import load_checkpoint, save_checkpoint
from varndrr.model import (
    DimensionsConfig, GaussianParams, decode_arguments, decode_relation, encode_posterior,
    encode_prior, init_params, reparameterize, zero_params,
)
from varndrr.numerics import ShapeError, make_rng
from varndrr.objective import batch_elbo_and_gradients
from varndrr.optimizer import AdamState, adam_step

import oracles
from conftest import TINY, random_instance


def test_default_dims_match_published_setup():
    d = DimensionsConfig()
    assert (d.d_z, d.d_x1, d.d_x2, d.d_y) == (20, 10001, 10001, 2)
    assert d.d_h1 == d.d_h2 == d.d_hy == d.d_h1p == d.d_h2p == d.d_m == 400


def test_dims_validation():
    with pytest.raises(ValueError):
        DimensionsConfig(d_z=0)
    with pytest.raises(ValueError):
        DimensionsConfig(d_x1=10, d_x2=11)
    DimensionsConfig(d_x1=10, d_x2=11, tie=False)


def test_init_is_deterministic():
    a = init_params(TINY, make_rng(3))
    b = init_params(TINY, make_rng(3))
    for (na, xa), (nb, xb) in zip(a.named_arrays(), b.named_arrays()):
        assert na == nb
        np.testing.assert_array_equal(xa, xb)


def test_init_variance_full_size():
    p = init_params(DimensionsConfig(), make_rng(0))
    w = p.phi.posterior.W_h1
    assert w.shape == (400, 10001)
    assert abs(w.var() - 1e-4) / 1e-4 < 0.10
    assert abs(w.mean()) < 1e-4


def test_tied_arrays_share_storage(tiny_params):
    th, post, pri = tiny_params.theta, tiny_params.phi.posterior, tiny_params.phi.prior
    assert th.W_x1p is th.W_x2p
    assert post.W_h1 is post.W_h2
    assert pri.W_h1 is not pri.W_h2
    th.W_x1p[0, 0] += 1.0
    assert th.W_x2p[0, 0] == th.W_x1p[0, 0]


def test_named_arrays_lists_tied_groups_once(tiny_params):
    names = [n for n, _ in tiny_params.named_arrays()]
    assert "theta.W_x1p" in names and "theta.W_x2p" not in names
    assert "phi.posterior.W_h1" in names and "phi.posterior.W_h2" not in names
    assert "phi.prior.W_h2" in names
    assert len(names) == len(tiny_params.all_fields()) - 2


def test_posterior_and_prior_share_nothing(tiny_params):
    post_ids = {id(a) for n, a in tiny_params.all_fields() if ".posterior." in n}
    prior_ids = {id(a) for n, a in tiny_params.all_fields() if ".prior." in n}
    assert not post_ids & prior_ids


def test_tying_survives_optimizer_steps(tiny_params):
    rng = np.random.default_rng(0)
    x1, x2, y = random_instance(rng)
    state = AdamState(alpha=0.05)
    for _ in range(5):
        _, _, g = batch_elbo_and_gradients(tiny_params, x1, x2, y, rng.standard_normal((1, 1, 3)))
        adam_step(tiny_params, g, state)
    np.testing.assert_array_equal(tiny_params.theta.W_x1p, tiny_params.theta.W_x2p)
    np.testing.assert_array_equal(tiny_params.phi.posterior.W_h1, tiny_params.phi.posterior.W_h2)


def test_zero_params_forward():
    p = zero_params(TINY)
    x1, x2, y = random_instance(np.random.default_rng(0))
    g = encode_posterior(p.phi, x1, x2, y)
    np.testing.assert_array_equal(g.mu, 0.0)
    np.testing.assert_array_equal(g.log_var, 0.0)
    np.testing.assert_array_equal(g.sigma, 1.0)
    gp = encode_prior(p.phi, x1, x2)
    np.testing.assert_array_equal(gp.mu, 0.0)
    np.testing.assert_array_equal(gp.log_var, 0.0)
    a1, a2 = decode_arguments(p.theta, np.ones(3))
    np.testing.assert_array_equal(a1, 0.5)
    np.testing.assert_array_equal(a2, 0.5)
    np.testing.assert_array_equal(decode_relation(p.theta, np.ones(3)), [0.5, 0.5])


@pytest.mark.parametrize("seed", range(10))
def test_forward_passes_match_straight_line_oracle(seed):
    rng = np.random.default_rng(seed)
    p = init_params(TINY, rng, std=0.7)
    x1, x2, y = random_instance(rng)
    z = rng.normal(size=3)
    th, post, pri = oracles.split_params(p)
    g = encode_posterior(p.phi, x1, x2, y)
    mu, lv = oracles.posterior(post, x1, x2, y)
    np.testing.assert_allclose(g.mu, mu, atol=1e-12)
    np.testing.assert_allclose(g.log_var, lv, atol=1e-12)
    g = encode_prior(p.phi, x1, x2)
    mu, lv = oracles.prior(pri, x1, x2)
    np.testing.assert_allclose(g.mu, mu, atol=1e-12)
    np.testing.assert_allclose(g.log_var, lv, atol=1e-12)
    a1, a2 = decode_arguments(p.theta, z)
    o1, o2 = oracles.decode_args(th, z)
    np.testing.assert_allclose(a1, o1, atol=1e-12)
    np.testing.assert_allclose(a2, o2, atol=1e-12)
    np.testing.assert_allclose(decode_relation(p.theta, z), oracles.decode_rel(th, z), atol=1e-12)


def test_forward_depends_only_on_vector(tiny_params):
    # same set bits built two ways -> identical output
    x1 = np.zeros(7)
    x1[[1, 4]] = 1.0
    x1b = np.zeros(7)
    for i in (4, 1):
        x1b[i] = 1.0
    x2, y = np.ones(7), np.array([1.0, 0.0])
    a = encode_posterior(tiny_params.phi, x1, x2, y)
    b = encode_posterior(tiny_params.phi, x1b, x2, y)
    np.testing.assert_array_equal(a.mu, b.mu)
    np.testing.assert_array_equal(a.log_var, b.log_var)


def test_prior_ignores_relation(tiny_params):
    x1, x2, _ = random_instance(np.random.default_rng(1))
    # y is not even a parameter; the posterior does react to it
    a = encode_posterior(tiny_params.phi, x1, x2, np.array([1.0, 0.0]))
    b = encode_posterior(tiny_params.phi, x1, x2, np.array([0.0, 1.0]))
    assert not np.allclose(a.mu, b.mu)
    np.testing.assert_array_equal(encode_prior(tiny_params.phi, x1, x2).mu,
                                  encode_prior(tiny_params.phi, x1, x2).mu)


def test_perturbing_prior_leaves_posterior_bit_identical(tiny_params):
    x1, x2, y = random_instance(np.random.default_rng(2))
    before = encode_posterior(tiny_params.phi, x1, x2, y)
    tiny_params.phi.prior.W_h1 += 0.3
    tiny_params.phi.prior.b_mu += 1.0
    after = encode_posterior(tiny_params.phi, x1, x2, y)
    np.testing.assert_array_equal(before.mu, after.mu)
    np.testing.assert_array_equal(before.log_var, after.log_var)


def test_reparameterize():
    g = GaussianParams(np.array([1.0, -2.0]), np.array([0.3, -1.0]))
    np.testing.assert_array_equal(reparameterize(g, np.zeros(2)), g.mu)
    e = np.array([0.5, -0.25])
    np.testing.assert_allclose(reparameterize(GaussianParams(g.mu, np.zeros(2)), e), g.mu + e)
    with pytest.raises(ShapeError):
        reparameterize(g, np.zeros(3))


def test_reparameterize_moments():
    g = GaussianParams(np.array([1.5, -0.5, 0.0]), np.array([0.4, -1.2, 0.0]))
    eps = make_rng(11).standard_normal((50_000, 3))
    z = reparameterize(g, eps)
    np.testing.assert_allclose(z.mean(0), g.mu, atol=0.02 * np.exp(0.5 * g.log_var).max())
    np.testing.assert_allclose(z.var(0), np.exp(g.log_var), rtol=0.02)


def test_decoder_outputs_inside_unit_interval_for_extreme_z(tiny_params):
    for z in (np.full(3, 1e6), np.full(3, -1e6), np.array([1e9, -1e9, 0.0])):
        a1, a2 = decode_arguments(tiny_params.theta, z)
        assert np.all((a1 > 0) & (a1 < 1)) and np.all((a2 > 0) & (a2 < 1))
        yp = decode_relation(tiny_params.theta, z)
        assert abs(yp.sum() - 1) < 1e-12


def test_decode_relation_sums_to_one():
    rng = np.random.default_rng(9)
    for _ in range(20):
        p = init_params(TINY, rng, std=2.0)
        assert abs(decode_relation(p.theta, rng.normal(size=3)).sum() - 1.0) < 1e-12


def test_dimension_mismatch_raises(tiny_params):
    with pytest.raises(ShapeError):
        encode_prior(tiny_params.phi, np.zeros(6), np.zeros(7))
    with pytest.raises(ShapeError):
        decode_relation(tiny_params.theta, np.zeros(4))


def test_every_parameter_is_used(tiny_params):
    """Shape audit: each trainable array receives a non-zero gradient."""
    rng = np.random.default_rng(3)
    x1, x2, y = random_instance(rng)
    _, _, grads = batch_elbo_and_gradients(tiny_params, x1, x2, y, rng.standard_normal((1, 1, 3)))
    dead = [n for n, g in grads.items() if not np.any(g != 0)]
    assert not dead


def test_copy_is_deep_and_keeps_tying(tiny_params):
    c = tiny_params.copy()
    assert c.theta.W_x1p is c.theta.W_x2p
    assert c.theta.W_x1p is not tiny_params.theta.W_x1p
    c.theta.W_x1p += 1
    assert not np.array_equal(c.theta.W_x1p, tiny_params.theta.W_x1p)


def test_checkpoint_round_trip_is_lossless(tmp_path, tiny_params):
    from varndrr.data import Vocabulary
    vocab = Vocabulary(["a", "b", "c"], 7)
    save_checkpoint(tmp_path / "m.npz", tiny_params, vocab, task="COM", seed=9)
    ck = load_checkpoint(tmp_path / "m.npz")
    assert ck.params.dims == TINY and ck.task == "COM" and ck.seed == 9
    assert ck.vocab.tokens == ["a", "b", "c"] and ck.vocab.d_x == 7
    for (n1, a1), (n2, a2) in zip(tiny_params.named_arrays(), ck.params.named_arrays()):
        assert n1 == n2
        assert a1.tobytes() == a2.tobytes()
    assert ck.params.theta.W_x1p is ck.params.theta.W_x2p


def test_checkpoint_dims_mismatch(tmp_path, tiny_params):
    save_checkpoint(tmp_path / "m.npz", tiny_params)
    with pytest.raises(ShapeError):
        load_checkpoint(tmp_path / "m.npz", expect_dims=DimensionsConfig.uniform(3, 7, 6))
