"""Lossless ``.npz`` checkpoints.

Layout: a JSON ``meta`` entry (dims, vocabulary tokens, task, seed, format
version) plus one float64 array per trainable parameter under
``param/<name>``.  Resumable training states add ``best/<name>``,
``adam_m/<name>``, ``adam_v/<name>`` and the history rows in ``meta``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .model import DimensionsConfig, ModelParams, build_params
from .numerics import ShapeError
from .optimizer import AdamState

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: ModelParams
    vocab: Vocabulary | None
    task: str | None
    seed: int | None
    meta: dict


def _params_to_arrays(params: ModelParams, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}/{name}": arr for name, arr in params.named_arrays()}


def _params_from_arrays(dims: DimensionsConfig, z, prefix: str) -> ModelParams:
    def fill(name, shape):
        key = f"{prefix}/{name}"
        if key not in z:
            raise ShapeError(f"checkpoint lacks {name}")
        arr = z[key]
        if arr.shape != shape:
            raise ShapeError(f"{name}: checkpoint has shape {arr.shape}, model expects {shape}")
        return arr.copy()
    return build_params(dims, fill)


def _write(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def save_checkpoint(path, params: ModelParams, vocab: Vocabulary | None = None,
                    task: str | None = None, seed: int | None = None, extra: dict | None = None) -> None:
    meta = {"format_version": FORMAT_VERSION, "dims": params.dims.to_dict(),
            "vocab": None if vocab is None else vocab.tokens,
            "vocab_size": None if vocab is None else vocab.d_x,
            "task": task, "seed": seed, "extra": extra or {}}
    _write(path, meta, _params_to_arrays(params, "param"))


def _read_meta(z) -> dict:
    meta = json.loads(str(z["meta"][()]))
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
    return meta


def load_checkpoint(path, expect_dims: DimensionsConfig | None = None) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        meta = _read_meta(z)
        dims = DimensionsConfig(**meta["dims"])
        if expect_dims is not None and dims != expect_dims:
            raise ShapeError(f"checkpoint dims {dims} differ from expected {expect_dims}")
        params = _params_from_arrays(dims, z, "param")
    vocab = None if meta["vocab"] is None else Vocabulary(meta["vocab"], meta["vocab_size"])
    return Checkpoint(params, vocab, meta["task"], meta["seed"], meta)


# ---------------------------------------------------------------------------
# resumable training state

def save_train_state(path, state, vocab: Vocabulary, task: str, seed: int) -> None:
    hist = [[r.epoch, r.elbo_per_datapoint, r.dev.tp, r.dev.fp, r.dev.fn, r.dev.tn]
            for r in state.history.records]
    adam = state.adam
    meta = {"format_version": FORMAT_VERSION, "dims": state.params.dims.to_dict(),
            "vocab": vocab.tokens, "vocab_size": vocab.d_x, "task": task, "seed": seed,
            "adam": {**adam.hyperparams(), "t": adam.t},
            "history": hist, "best_epoch": state.history.best_epoch, "extra": {}}
    arrays = _params_to_arrays(state.params, "param")
    arrays.update(_params_to_arrays(state.best_params, "best"))
    for name in adam.m:
        arrays[f"adam_m/{name}"] = adam.m[name]
        arrays[f"adam_v/{name}"] = adam.v[name]
    _write(path, meta, arrays)


def load_train_state(path):
    from .eval import metrics_from_counts
    from .trainer import EpochRecord, TrainHistory, TrainState

    with np.load(path, allow_pickle=False) as z:
        meta = _read_meta(z)
        if "adam" not in meta:
            raise ValueError(f"{path} is a model checkpoint, not a training state")
        dims = DimensionsConfig(**meta["dims"])
        params = _params_from_arrays(dims, z, "param")
        best = _params_from_arrays(dims, z, "best")
        a = meta["adam"]
        adam = AdamState(alpha=a["alpha"], beta1=a["beta1"], beta2=a["beta2"], eps_hat=a["eps_hat"], t=a["t"])
        for name, _ in params.named_arrays():
            if f"adam_m/{name}" in z:
                adam.m[name] = z[f"adam_m/{name}"].copy()
                adam.v[name] = z[f"adam_v/{name}"].copy()
    history = TrainHistory(
        [EpochRecord(e, elbo, metrics_from_counts(tp, fp, fn, tn)) for e, elbo, tp, fp, fn, tn in meta["history"]],
        meta["best_epoch"])
    vocab = Vocabulary(meta["vocab"], meta["vocab_size"])
    return TrainState(params, adam, history, best), vocab, meta
