"""Minibatch stochastic ascent on the variational bound with dev-F1 selection.

Randomness is split into named streams derived from the run seed, so the
minibatch order and noise of epoch ``e`` depend only on ``(seed, e)``:

    init weights      (seed, 0)
    balancing         (seed, 1)
    epoch shuffle     (seed, 2, e)
    epoch noise       (seed, 3, e)
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import RELATIONS, DatasetSplit, EncodedSet, Vocabulary, balance_indices, build_vocab
from .eval import MetricsReport, evaluate
from .model import DimensionsConfig, ModelParams, init_params, INIT_STD
from .numerics import NonFiniteError, make_rng
from .objective import batch_elbo_and_gradients, sample_eps
from .optimizer import AdamState, adam_step

log = logging.getLogger(__name__)

HISTORY_HEADER = ["epoch", "elbo_per_datapoint", "dev_acc", "dev_p", "dev_r", "dev_f1"]

STREAM_INIT, STREAM_BALANCE, STREAM_SHUFFLE, STREAM_NOISE = range(4)


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "EXP"
    batch_size: int = 16        # M
    epochs: int = 1000          # A
    mc_samples: int = 1         # L
    dims: DimensionsConfig = field(default_factory=DimensionsConfig)
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    init_std: float = INIT_STD
    seed: int = 0
    patience: int | None = 100

    def __post_init__(self):
        if self.task not in RELATIONS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.mc_samples < 1:
            raise ValueError("batch_size, epochs and mc_samples must all be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 (or None to disable)")


@dataclass
class EpochRecord:
    epoch: int
    elbo_per_datapoint: float
    dev: MetricsReport


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.records)

    @property
    def best_f1(self) -> float:
        return max((r.dev.f1 for r in self.records), default=float("nan"))

    def elbo_curve(self) -> np.ndarray:
        return np.array([r.elbo_per_datapoint for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in self.records:
            w.writerow([r.epoch, repr(r.elbo_per_datapoint), repr(r.dev.accuracy),
                        repr(r.dev.precision), repr(r.dev.recall), repr(r.dev.f1)])
        return buf.getvalue()


@dataclass
class TrainState:
    """Everything needed to continue a run exactly where it stopped."""
    params: ModelParams
    adam: AdamState
    history: TrainHistory
    best_params: ModelParams


def convergence_check(history: TrainHistory, patience: int) -> bool:
    """True once dev F1 has gone ``patience`` epochs without a new best."""
    if not history.records:
        raise ValueError("empty history")
    f1 = [r.dev.f1 for r in history.records]
    best_at = int(np.argmax(f1))
    return len(f1) - 1 - best_at >= patience


def prepare_task(data: DatasetSplit, vocab: Vocabulary, config: TrainConfig) -> tuple[EncodedSet, EncodedSet]:
    """Balanced training set and natural dev set for the one-vs-all task."""
    train = EncodedSet.from_pairs(data.train, vocab, config.task)
    dev = EncodedSet.from_pairs(data.dev, vocab, config.task)
    if len(train) == 0:
        raise ValueError("empty training split")
    if len(dev) == 0:
        raise ValueError("empty dev split; model selection needs one")
    idx = balance_indices(train.positive, make_rng(config.seed, STREAM_BALANCE))
    return train.subset(idx), dev


def smoothed(values, window: int = 10) -> np.ndarray:
    """Trailing moving average (shorter window at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def train(config: TrainConfig, data: DatasetSplit, vocab: Vocabulary | None = None,
          resume: TrainState | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[ModelParams, TrainHistory]:
    """Run up to ``config.epochs`` epochs and return the best-dev-F1 parameters."""
    state = train_state(config, data, vocab, resume, on_epoch)
    return state.best_params, state.history


def train_state(config: TrainConfig, data: DatasetSplit, vocab: Vocabulary | None = None,
                resume: TrainState | None = None,
                on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainState:
    """Same as :func:`train` but returns the full resumable state."""
    if vocab is None:
        vocab = build_vocab(data.train, config.dims.d_x1)
    if vocab.d_x != config.dims.d_x1 or vocab.d_x != config.dims.d_x2:
        raise ValueError(f"vocabulary size {vocab.d_x} does not match dims d_x1={config.dims.d_x1}")
    train_set, dev_set = prepare_task(data, vocab, config)

    if resume is None:
        params = init_params(config.dims, make_rng(config.seed, STREAM_INIT), std=config.init_std)
        adam = AdamState(alpha=config.alpha, beta1=config.beta1, beta2=config.beta2, eps_hat=config.eps_hat)
        state = TrainState(params, adam, TrainHistory(), params.copy())
    else:
        state = resume

    n = len(train_set)
    M, L = config.batch_size, config.mc_samples
    for epoch in range(len(state.history) + 1, config.epochs + 1):
        if config.patience is not None and state.history.records \
                and convergence_check(state.history, config.patience):
            log.info("dev F1 flat for %d epochs, stopping at epoch %d", config.patience, epoch - 1)
            break
        order = make_rng(config.seed, STREAM_SHUFFLE, epoch).permutation(n)
        noise = make_rng(config.seed, STREAM_NOISE, epoch)
        elbo_sum = 0.0
        for b, start in enumerate(range(0, n, M)):
            X1, X2, Y = train_set.dense(order[start:start + M])
            eps = sample_eps(noise, L, len(X1), config.dims.d_z)
            try:
                _, totals, grads = batch_elbo_and_gradients(state.params, X1, X2, Y, eps)
                adam_step(state.params, grads, state.adam)
            except NonFiniteError as exc:
                raise TrainingAborted(f"epoch {epoch}, batch {b}: {exc}") from exc
            elbo_sum += float(totals.sum())
        elbo = elbo_sum / n
        if not math.isfinite(elbo):
            raise TrainingAborted(f"epoch {epoch}: non-finite ELBO")

        dev = evaluate(state.params, dev_set)
        rec = EpochRecord(epoch, elbo, dev)
        if state.history.best_epoch is None or dev.f1 > state.history.best_f1:
            state.history.best_epoch = epoch
            state.best_params = state.params.copy()
        state.history.records.append(rec)
        log.info("epoch %d elbo/datapoint %.4f dev F1 %.4f", epoch, elbo, dev.f1)
        if on_epoch is not None:
            on_epoch(rec)
    return state
