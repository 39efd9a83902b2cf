"""Corpus records, vocabulary, bag-of-words encoding, balancing, synthetic corpora.

Corpus files are UTF-8, one record per line::

    split <TAB> relation <TAB> arg1 tokens <TAB> arg2 tokens

``split`` is one of train/dev/test, ``relation`` one of COM/CON/EXP/TEM and
the token fields are pre-tokenized, space separated.  Tokens are lowercased
on load.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import DTYPE, make_rng

RELATIONS = ("COM", "CON", "EXP", "TEM")
SPLITS = ("train", "dev", "test")
DEFAULT_VOCAB_SIZE = 10001


class CorpusFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class RawDocumentPair:
    arg1_tokens: tuple[str, ...]
    arg2_tokens: tuple[str, ...]
    relation: str

    def __post_init__(self):
        if not self.arg1_tokens or not self.arg2_tokens:
            raise ValueError("both arguments need at least one token")
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass
class DatasetSplit:
    train: list[RawDocumentPair] = field(default_factory=list)
    dev: list[RawDocumentPair] = field(default_factory=list)
    test: list[RawDocumentPair] = field(default_factory=list)

    def __getitem__(self, split: str) -> list[RawDocumentPair]:
        if split not in SPLITS:
            raise KeyError(split)
        return getattr(self, split)

    def counts(self) -> dict[str, dict[str, int]]:
        """Instances per relation for each split."""
        return {s: {r: sum(p.relation == r for p in self[s]) for r in RELATIONS} for s in SPLITS}


def _tokens(field_text: str) -> tuple[str, ...]:
    return tuple(t.lower() for t in field_text.split())


def parse_record(line: str, lineno: int = 0) -> tuple[str, RawDocumentPair]:
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) != 4:
        raise CorpusFormatError(lineno, f"expected 4 tab-separated fields, got {len(parts)}")
    split, rel, a1, a2 = parts
    if split not in SPLITS:
        raise CorpusFormatError(lineno, f"unknown split {split!r}")
    if rel not in RELATIONS:
        raise CorpusFormatError(lineno, f"unknown relation {rel!r}")
    t1, t2 = _tokens(a1), _tokens(a2)
    if not t1 or not t2:
        raise CorpusFormatError(lineno, "empty argument")
    return split, RawDocumentPair(t1, t2, rel)


def load_corpus(path) -> DatasetSplit:
    data = DatasetSplit()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            split, pair = parse_record(line, lineno)
            data[split].append(pair)
    return data


def format_record(split: str, pair: RawDocumentPair) -> str:
    return f"{split}\t{pair.relation}\t{' '.join(pair.arg1_tokens)}\t{' '.join(pair.arg2_tokens)}\n"


def write_corpus(data: DatasetSplit, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for split in SPLITS:
            for pair in data[split]:
                fh.write(format_record(split, pair))


# ---------------------------------------------------------------------------

@dataclass
class Vocabulary:
    tokens: list[str]           # index i -> token, for i < d_x - 1
    d_x: int

    def __post_init__(self):
        if self.d_x < 2:
            raise ValueError("vocabulary size must be >= 2")
        if len(self.tokens) > self.d_x - 1:
            raise ValueError("more tokens than slots")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def unk_index(self) -> int:
        return self.d_x - 1

    def lookup(self, token: str) -> int:
        return self.index.get(token, self.unk_index)

    def __len__(self) -> int:
        return self.d_x


def build_vocab(train: Iterable[RawDocumentPair], size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    """Top ``size - 1`` training tokens by count (ties: lexicographic), plus UNK."""
    if size < 2:
        raise ValueError("size must be >= 2")
    counts = Counter()
    for pair in train:
        counts.update(pair.arg1_tokens)
        counts.update(pair.arg2_tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[: size - 1]], size)


@dataclass
class EncodedInstance:
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray

    @property
    def positive(self) -> bool:
        return bool(self.y[0] == 1.0)


def label_vector(relation: str, target: str) -> np.ndarray:
    return np.array([1.0, 0.0] if relation == target else [0.0, 1.0], dtype=DTYPE)


def token_indices(tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    return np.array(sorted({vocab.lookup(t) for t in tokens}), dtype=np.int64)


def vectorize(pair: RawDocumentPair, vocab: Vocabulary, target: str) -> EncodedInstance:
    """Binary presence vectors for both arguments and a one-vs-all label."""
    if target not in RELATIONS:
        raise ValueError(f"unknown target relation {target!r}")
    x1 = np.zeros(vocab.d_x, dtype=DTYPE)
    x2 = np.zeros(vocab.d_x, dtype=DTYPE)
    x1[token_indices(pair.arg1_tokens, vocab)] = 1.0
    x2[token_indices(pair.arg2_tokens, vocab)] = 1.0
    return EncodedInstance(x1, x2, label_vector(pair.relation, target))


class EncodedSet:
    """A sparse-stored set of encoded instances, densified one batch at a time.

    Dense storage of a full training set at vocabulary size 10001 would take
    gigabytes, so only the active token indices are kept.
    """

    def __init__(self, x1_idx: list[np.ndarray], x2_idx: list[np.ndarray],
                 positive: np.ndarray, d_x: int):
        self.x1_idx = x1_idx
        self.x2_idx = x2_idx
        self.positive = np.asarray(positive, dtype=bool)
        self.d_x = d_x

    @classmethod
    def from_pairs(cls, pairs: Sequence[RawDocumentPair], vocab: Vocabulary, target: str) -> "EncodedSet":
        if target not in RELATIONS:
            raise ValueError(f"unknown target relation {target!r}")
        return cls([token_indices(p.arg1_tokens, vocab) for p in pairs],
                   [token_indices(p.arg2_tokens, vocab) for p in pairs],
                   np.array([p.relation == target for p in pairs], dtype=bool), vocab.d_x)

    def __len__(self) -> int:
        return len(self.positive)

    def subset(self, idx) -> "EncodedSet":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedSet([self.x1_idx[i] for i in idx], [self.x2_idx[i] for i in idx],
                          self.positive[idx], self.d_x)

    def dense(self, idx=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        idx = np.arange(len(self)) if idx is None else np.asarray(idx, dtype=np.int64)
        X1 = np.zeros((len(idx), self.d_x), dtype=DTYPE)
        X2 = np.zeros((len(idx), self.d_x), dtype=DTYPE)
        for row, i in enumerate(idx):
            X1[row, self.x1_idx[i]] = 1.0
            X2[row, self.x2_idx[i]] = 1.0
        Y = np.where(self.positive[idx, None], [1.0, 0.0], [0.0, 1.0])
        return X1, X2, Y

    def instance(self, i: int) -> EncodedInstance:
        X1, X2, Y = self.dense([i])
        return EncodedInstance(X1[0], X2[0], Y[0])


def balance_indices(positive: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of a class-balanced, shuffled resample of the labels.

    Every original index appears at least once; the minority class is topped
    up by uniform draws with replacement.
    """
    positive = np.asarray(positive, dtype=bool)
    pos = np.flatnonzero(positive)
    neg = np.flatnonzero(~positive)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError(f"cannot balance: {len(pos)} positive, {len(neg)} negative instances")
    minority, majority = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    extra = rng.choice(minority, size=len(majority) - len(minority), replace=True)
    out = np.concatenate([pos, neg, extra])
    rng.shuffle(out)
    return out


def balance_by_resampling(train: Sequence[EncodedInstance], rng: np.random.Generator) -> list[EncodedInstance]:
    idx = balance_indices(np.array([inst.positive for inst in train]), rng)
    return [train[i] for i in idx]


# ---------------------------------------------------------------------------
# reference data shipped with the package

def _read_packaged_csv(name: str) -> list[dict[str, str]]:
    text = resources.files("varndrr").joinpath("data", name).read_text(encoding="utf-8")
    return list(csv.DictReader(text.splitlines()))


def table1_counts() -> dict[str, dict[str, int]]:
    """Published PDTB implicit-relation counts, ``{split: {relation: n}}``."""
    rows = _read_packaged_csv("pdtb_split_counts.csv")
    return {s: {r["relation"]: int(r[s]) for r in rows} for s in SPLITS}


# ---------------------------------------------------------------------------
# synthetic corpora

@dataclass
class SynthConfig:
    vocab_size: int = 200
    n_train: int = 2000
    n_dev: int = 400
    n_test: int = 400
    # probability that a token comes from the shared pool instead of the
    # relation's own pool; 0 gives perfectly separable classes
    overlap: float = 0.0
    relation_weights: dict[str, float] = field(
        default_factory=lambda: {"COM": 1942, "CON": 3342, "EXP": 7004, "TEM": 760})
    target: str = "EXP"
    balanced_train: bool = False
    min_len: int = 4
    max_len: int = 12
    seed: int = 0
    counts: dict[str, dict[str, int]] | None = None

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ValueError("vocab_size must be >= 4")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError("overlap must lie in [0, 1]")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.target not in RELATIONS:
            raise ValueError(f"unknown target {self.target!r}")


def _allocate(n: int, weights: dict[str, float]) -> dict[str, int]:
    """Split n into integer counts proportional to weights (largest remainder)."""
    total = float(sum(weights.values()))
    raw = {r: n * weights.get(r, 0.0) / total for r in RELATIONS}
    out = {r: int(np.floor(v)) for r, v in raw.items()}
    rest = n - sum(out.values())
    for r in sorted(RELATIONS, key=lambda r: (-(raw[r] - out[r]), r))[:rest]:
        out[r] += 1
    return out


def synth_token_pools(vocab_size: int) -> tuple[dict[str, list[str]], list[str]]:
    """Disjoint per-relation pools plus a shared pool covering the rest."""
    words = [f"w{i:05d}" for i in range(vocab_size)]
    size = max(1, vocab_size // 5)
    pools = {r: words[k * size:(k + 1) * size] for k, r in enumerate(RELATIONS)}
    shared = words[len(RELATIONS) * size:]
    return pools, shared


def split_plan(cfg: SynthConfig) -> dict[str, dict[str, int]]:
    if cfg.counts is not None:
        return {s: {r: int(cfg.counts.get(s, {}).get(r, 0)) for r in RELATIONS} for s in SPLITS}
    plan = {"train": None, "dev": _allocate(cfg.n_dev, cfg.relation_weights),
            "test": _allocate(cfg.n_test, cfg.relation_weights)}
    if cfg.balanced_train:
        others = {r: w for r, w in cfg.relation_weights.items() if r != cfg.target}
        plan["train"] = _allocate(cfg.n_train - cfg.n_train // 2, others)
        plan["train"][cfg.target] = cfg.n_train // 2
    else:
        plan["train"] = _allocate(cfg.n_train, cfg.relation_weights)
    return plan


def generate_synthetic(cfg: SynthConfig) -> tuple[DatasetSplit, dict]:
    """Draw a corpus from class-conditional unigram distributions.

    Dev and test keep the natural class mix.  Returns the corpus and a JSON
    friendly description of how it was generated.
    """
    pools, shared = synth_token_pools(cfg.vocab_size)
    if cfg.overlap > 0 and not shared:
        raise ValueError("vocab_size too small for a shared pool")
    plan = split_plan(cfg)
    data = DatasetSplit()
    for k, split in enumerate(SPLITS):
        rng = make_rng(cfg.seed, 7, k)
        rels = [r for r in RELATIONS for _ in range(plan[split][r])]
        rng.shuffle(rels)
        for rel in rels:
            args = []
            for _ in range(2):
                n = int(rng.integers(cfg.min_len, cfg.max_len + 1))
                from_shared = rng.random(n) < cfg.overlap
                own = rng.integers(0, len(pools[rel]), size=n)
                common = rng.integers(0, max(1, len(shared)), size=n)
                args.append(tuple(shared[c] if s else pools[rel][o]
                                  for s, o, c in zip(from_shared, own, common)))
            data[split].append(RawDocumentPair(args[0], args[1], rel))
    truth = {
        "config": asdict(cfg),
        "relation_pools": pools,
        "shared_pool": shared,
        "counts": data.counts(),
    }
    return data, truth


def write_truth(truth: dict, path) -> None:
    Path(path).write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def oracle_predict(pair: RawDocumentPair, target: str, pools: dict[str, list[str]]) -> bool:
    """Presence-threshold oracle: positive iff the target pool is at least as
    represented as all other relation pools together."""
    own = set(pools[target])
    other = set().union(*(set(v) for r, v in pools.items() if r != target))
    toks = pair.arg1_tokens + pair.arg2_tokens
    return sum(t in own for t in toks) >= sum(t in other for t in toks)
