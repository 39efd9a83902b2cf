"""``varndrr`` command line: synth, train, eval, predict.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, load_train_state, save_checkpoint, save_train_state
from .data import (
    RELATIONS, SPLITS, CorpusFormatError, EncodedSet, SynthConfig, build_vocab, generate_synthetic,
    load_corpus, write_corpus, write_truth, token_indices,
)
from .eval import compute_metrics, metrics_csv, predict_set, render_table
from .model import DimensionsConfig
from .numerics import NonFiniteError, ShapeError
from .trainer import TrainConfig, TrainingAborted, train_state

log = logging.getLogger("varndrr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# flag dest -> default; the published setup
TRAIN_DEFAULTS = {
    "task": "EXP",
    "seed": 0,
    "epochs": 1000,
    "batch": 16,
    "mc_samples": 1,
    "latent_dim": 20,
    "hidden_dim": 400,
    "vocab_size": 10001,
    "patience": 100,
    "lr": 0.001,
}
INT_KEYS = {"seed", "epochs", "batch", "mc_samples", "latent_dim", "hidden_dim", "vocab_size", "patience"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path) -> dict:
    """``key=value`` lines (``#`` comments allowed), or a JSON object.

    A run manifest is accepted too: its ``config`` entry is used.
    """
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        obj = json.loads(text)
        return dict(obj.get("config", obj))
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def resolve_train_config(args) -> dict:
    """Defaults, then the --config file, then explicit flags."""
    cfg = dict(TRAIN_DEFAULTS)
    cfg["corpus"] = None
    if args.config:
        file_cfg = read_config_file(args.config)
        unknown = set(file_cfg) - set(cfg) - {"out"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        file_cfg.pop("out", None)
        cfg.update(file_cfg)
    for key in list(cfg):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    try:
        for key in INT_KEYS:
            cfg[key] = int(cfg[key])
        cfg["lr"] = float(cfg["lr"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    if cfg["task"] not in RELATIONS:
        raise UsageError(f"--task must be one of {RELATIONS}")
    if not cfg["corpus"]:
        raise UsageError("--corpus is required")
    cfg["corpus"] = str(Path(cfg["corpus"]).resolve())
    return cfg


def _train_config(cfg: dict) -> TrainConfig:
    dims = DimensionsConfig.uniform(d_z=cfg["latent_dim"], d_x=cfg["vocab_size"], hidden=cfg["hidden_dim"])
    return TrainConfig(task=cfg["task"], batch_size=cfg["batch"], epochs=cfg["epochs"],
                       mc_samples=cfg["mc_samples"], dims=dims, alpha=cfg["lr"], seed=cfg["seed"],
                       patience=cfg["patience"] if cfg["patience"] > 0 else None)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load(path):
    try:
        return load_corpus(path)
    except FileNotFoundError as exc:
        raise DataError(f"cannot read corpus: {exc}") from exc
    except CorpusFormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    try:
        tcfg = _train_config(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory: {exc}") from exc

    t0 = time.time()
    data = _load(cfg["corpus"])
    resume = None
    if args.resume:
        try:
            resume, vocab, meta = load_train_state(args.resume)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot resume from {args.resume}: {exc}") from exc
        if resume.params.dims != tcfg.dims:
            raise ShapeError(f"resume state dims {resume.params.dims} differ from requested {tcfg.dims}")
    else:
        vocab = build_vocab(data.train, cfg["vocab_size"])

    manifest = {
        "artifact": "varndrr",
        "version": __version__,
        "command": "train",
        "config": cfg,
        "resolved": {"dims": tcfg.dims.to_dict(), "adam": {"alpha": tcfg.alpha, "beta1": tcfg.beta1,
                                                           "beta2": tcfg.beta2, "eps_hat": tcfg.eps_hat},
                     "init_std": tcfg.init_std},
        "corpus_sha256": _sha256(cfg["corpus"]),
        "resumed_from": args.resume,
        "files": {"checkpoint": "model.npz", "state": "last.npz", "history": "history.csv"},
        "timings": {"started": t0},
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    try:
        state = train_state(tcfg, data, vocab, resume=resume)
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    save_checkpoint(out / "model.npz", state.best_params, vocab, tcfg.task, tcfg.seed,
                    extra={"best_epoch": state.history.best_epoch})
    save_train_state(out / "last.npz", state, vocab, tcfg.task, tcfg.seed)
    (out / "history.csv").write_text(state.history.to_csv(), encoding="utf-8")

    t1 = time.time()
    manifest["timings"].update({"finished": t1, "seconds": round(t1 - t0, 3)})
    manifest["result"] = {"epochs_run": len(state.history), "best_epoch": state.history.best_epoch,
                          "best_dev_f1": state.history.best_f1}
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"trained {len(state.history)} epochs; best dev F1 {100 * state.history.best_f1:.2f} "
          f"at epoch {state.history.best_epoch}; wrote {out}")
    return EXIT_OK


def _load_model(args):
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except FileNotFoundError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from exc
    dims = ckpt.params.dims
    for flag, have in (("vocab_size", dims.d_x1), ("latent_dim", dims.d_z), ("hidden_dim", dims.d_h1)):
        want = getattr(args, flag, None)
        if want is not None and int(want) != have:
            raise ShapeError(f"--{flag.replace('_', '-')} {want} does not match checkpoint ({have})")
    if ckpt.vocab is None:
        raise DataError("checkpoint carries no vocabulary")
    return ckpt


def cmd_eval(args) -> int:
    ckpt = _load_model(args)
    task = args.task or ckpt.task
    if task not in RELATIONS:
        raise UsageError("no task given and none stored in checkpoint")
    data = _load(args.corpus)
    pairs = data[args.split]
    if not pairs:
        raise DataError(f"split {args.split!r} is empty")
    enc = EncodedSet.from_pairs(pairs, ckpt.vocab, task)
    labels, _ = predict_set(ckpt.params, enc)
    report = compute_metrics(labels, enc.positive)
    print(render_table(report, task, label=f"{args.split}"))
    text = metrics_csv(report, task, args.split)
    dest = Path(args.out) if args.out else Path(args.checkpoint).with_name(f"metrics_{args.split}.csv")
    dest.write_text(text, encoding="utf-8")
    return EXIT_OK


def _read_predict_input(path) -> list[tuple[list[str], list[str]]]:
    fh = sys.stdin if path in (None, "-") else open(path, encoding="utf-8")
    rows = []
    try:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) == 2:
                a1, a2 = parts
            elif len(parts) == 4:
                a1, a2 = parts[2], parts[3]
            else:
                raise DataError(f"line {n}: expected 'arg1<TAB>arg2' or a 4-field corpus record")
            rows.append(([t.lower() for t in a1.split()], [t.lower() for t in a2.split()]))
    finally:
        if fh is not sys.stdin:
            fh.close()
    return rows


def cmd_predict(args) -> int:
    ckpt = _load_model(args)
    task = args.task or ckpt.task
    try:
        rows = _read_predict_input(args.corpus)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    enc = EncodedSet([token_indices(a1, ckpt.vocab) for a1, _ in rows],
                     [token_indices(a2, ckpt.vocab) for _, a2 in rows],
                     np.zeros(len(rows), dtype=bool), ckpt.vocab.d_x)
    labels, probs = predict_set(ckpt.params, enc)
    lines = [f"{task if lab else 'Other'}\t{float(p)!r}\n" for lab, p in zip(labels, probs)]
    if args.out:
        Path(args.out).write_text("".join(lines), encoding="utf-8")
    else:
        sys.stdout.write("".join(lines))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        cfg = SynthConfig(vocab_size=args.vocab_size, n_train=args.n_train, n_dev=args.n_dev,
                          n_test=args.n_test, overlap=args.overlap, target=args.task,
                          balanced_train=args.balanced_train, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    data, truth = generate_synthetic(cfg)
    out = Path(args.out)
    try:
        write_corpus(data, out)
        write_truth(truth, out.with_name(out.name + ".truth.json"))
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc
    counts = data.counts()
    print(" ".join(f"{s}={sum(counts[s].values())}" for s in SPLITS), f"-> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="varndrr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one one-vs-all model")
    t.add_argument("--corpus")
    t.add_argument("--task", choices=RELATIONS)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int, help="max epochs A (default 1000)")
    t.add_argument("--batch", type=int, help="minibatch size M (default 16)")
    t.add_argument("--mc-samples", type=int, help="noise samples L per instance (default 1)")
    t.add_argument("--latent-dim", type=int, help="d_z (default 20)")
    t.add_argument("--hidden-dim", type=int, help="every hidden layer and d_m (default 400)")
    t.add_argument("--vocab-size", type=int, help="d_x including the unknown-word slot (default 10001)")
    t.add_argument("--patience", type=int, help="stop after this many epochs without a dev-F1 gain; 0 disables")
    t.add_argument("--lr", type=float, help="Adam learning rate (default 0.001)")
    t.add_argument("--config", help="key=value or JSON file (a run manifest works); flags override it")
    t.add_argument("--resume", help="continue from a last.npz training state")
    t.add_argument("--out", required=True, help="run directory")
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "score a checkpoint on a corpus split"),
                                 ("predict", cmd_predict, "label unlabeled argument pairs")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--corpus", required=(name == "eval"),
                       help="corpus file" if name == "eval" else "arg1<TAB>arg2 lines or corpus records; '-' for stdin")
        e.add_argument("--task", choices=RELATIONS, help="defaults to the checkpoint's task")
        e.add_argument("--out")
        e.add_argument("--vocab-size", type=int)
        e.add_argument("--latent-dim", type=int)
        e.add_argument("--hidden-dim", type=int)
        if name == "eval":
            e.add_argument("--split", choices=SPLITS, default="test")
        e.set_defaults(func=func)

    s = sub.add_parser("synth", help="write a synthetic corpus and its ground truth")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--vocab-size", type=int, default=200)
    s.add_argument("--n-train", type=int, default=2000)
    s.add_argument("--n-dev", type=int, default=400)
    s.add_argument("--n-test", type=int, default=400)
    s.add_argument("--overlap", type=float, default=0.0, help="share of tokens drawn from the common pool")
    s.add_argument("--task", choices=RELATIONS, default="EXP", help="target used by --balanced-train")
    s.add_argument("--balanced-train", action="store_true")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"varndrr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeError as exc:
        print(f"varndrr: shape error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"varndrr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingAborted, NonFiniteError) as exc:
        print(f"varndrr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
