"""Implicit discourse relation classification with a latent Gaussian generative model.

A latent Gaussian variable generates both bag-of-words arguments and the
relation label; a posterior network q(z|x,y) and a prior network q'(z|x) are
trained jointly with the generator by maximizing a reparameterized lower
bound.  Prediction uses the prior mean.
"""
__version__ = "0.1.0"

from .data import (  # noqa: E402
    RELATIONS, DatasetSplit, EncodedInstance, EncodedSet, RawDocumentPair, SynthConfig, Vocabulary,
    balance_by_resampling, build_vocab, generate_synthetic, load_corpus, vectorize, write_corpus,
)
from .eval import MetricsReport, compute_metrics, evaluate, predict  # noqa: E402
from .model import (  # noqa: E402
    DimensionsConfig, GaussianParams, ModelParams, decode_arguments, decode_relation,
    encode_posterior, encode_prior, init_params, reparameterize,
)
from .objective import ElboBreakdown, elbo_and_gradients, kl_diag_gaussians  # noqa: E402
from .optimizer import AdamState, adam_step  # noqa: E402
from .trainer import TrainConfig, TrainHistory, convergence_check, train  # noqa: E402
