"""Test-time prediction and binary classification metrics.

At test time the relation is read off the prior mean: ``z = mu'(x)``, then
``y' = p(y|z)``; no sampling is involved and the posterior network is never
touched.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import EncodedSet, _read_packaged_csv
from .model import ModelParams, decode_relation, encode_prior

METRIC_FIELDS = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_percent(self) -> dict[str, float]:
        return {k: round(100.0 * getattr(self, k), 2) for k in METRIC_FIELDS}


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> MetricsReport:
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("no instances")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return MetricsReport((tp + tn) / total, p, r, f1, tp, fp, fn, tn)


def compute_metrics(predictions: Sequence[bool], golds: Sequence[bool]) -> MetricsReport:
    """Metrics with the target relation as the positive class."""
    pred = np.asarray(predictions, dtype=bool)
    gold = np.asarray(golds, dtype=bool)
    if pred.shape != gold.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {gold.shape} golds")
    if pred.size == 0:
        raise ValueError("empty prediction list")
    return metrics_from_counts(int(np.sum(pred & gold)), int(np.sum(pred & ~gold)),
                               int(np.sum(~pred & gold)), int(np.sum(~pred & ~gold)))


def positive_probability(model: ModelParams, X1, X2) -> np.ndarray:
    z = encode_prior(model.phi, X1, X2).mu
    return decode_relation(model.theta, z)[..., 0]


def predict(model: ModelParams, inst) -> bool:
    """True when the instance is predicted to carry the target relation (ties go positive)."""
    yp = decode_relation(model.theta, encode_prior(model.phi, inst.x1, inst.x2).mu)
    return bool(yp[0] >= yp[1])


def predict_set(model: ModelParams, data: EncodedSet, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Labels and positive-class probabilities for every instance of ``data``."""
    labels, probs = [], []
    for start in range(0, len(data), batch_size):
        X1, X2, _ = data.dense(np.arange(start, min(start + batch_size, len(data))))
        yp = decode_relation(model.theta, encode_prior(model.phi, X1, X2).mu)
        labels.append(yp[:, 0] >= yp[:, 1])
        probs.append(yp[:, 0])
    if not labels:
        return np.zeros(0, dtype=bool), np.zeros(0)
    return np.concatenate(labels), np.concatenate(probs)


def evaluate(model: ModelParams, data: EncodedSet) -> MetricsReport:
    labels, _ = predict_set(model, data)
    return compute_metrics(labels, data.positive)


# ---------------------------------------------------------------------------
# published reference rows

@dataclass(frozen=True)
class ReferenceRow:
    task: str
    model: str
    acc: float | None
    p: float | None
    r: float | None
    f1: float | None


def _cell(text: str) -> float | None:
    text = text.strip()
    return None if text in ("-", "") else float(text)


def reference_rows(task: str | None = None) -> list[ReferenceRow]:
    rows = [ReferenceRow(r["task"], r["model"], _cell(r["acc"]), _cell(r["p"]), _cell(r["r"]), _cell(r["f1"]))
            for r in _read_packaged_csv("reference_results.csv")]
    return [r for r in rows if task is None or r.task == task]


def implied_confusions(row: ReferenceRow, n_pos: int, n_total_range=range(1, 5001)) -> list[tuple[int, int, int, int]]:
    """All (tp, fp, fn, tn) whose percentages round to the reported row.

    Needs every one of acc/P/R/F1; searches over test-set sizes in
    ``n_total_range``.
    """
    if None in (row.acc, row.p, row.r, row.f1):
        raise ValueError(f"{row.model}/{row.task}: incomplete row")
    out = []
    for tp in range(n_pos + 1):
        if round(100 * tp / n_pos, 2) != row.r:
            continue
        fn = n_pos - tp
        for fp in range(0, max(n_total_range) + 1):
            if tp + fp == 0 or round(100 * tp / (tp + fp), 2) != row.p:
                continue
            if round(100 * 2 * tp / (2 * tp + fp + fn), 2) != row.f1:
                continue
            for n in n_total_range:
                tn = n - n_pos - fp
                if tn >= 0 and round(100 * (tp + tn) / n, 2) == row.acc:
                    out.append((tp, fp, fn, tn))
    return out


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{v:.2f}"


def render_table(report: MetricsReport, task: str, label: str = "this run") -> str:
    """Human-readable table: this run on top, published rows for the task below."""
    lines = [f"{task} vs Other",
             f"{'Model':<12}{'Acc':>8}{'P':>8}{'R':>8}{'F1':>8}",
             "-" * 44]
    pct = report.as_percent()
    lines.append(f"{label:<12}" + "".join(f"{pct[k]:>8.2f}" for k in METRIC_FIELDS))
    lines.append(f"  (tp={report.tp} fp={report.fp} fn={report.fn} tn={report.tn})")
    refs = reference_rows(task)
    if refs:
        lines.append("published:")
        for r in refs:
            lines.append(f"{r.model:<12}" + "".join(f"{_fmt(v):>8}" for v in (r.acc, r.p, r.r, r.f1)))
    return "\n".join(lines)


METRICS_CSV_HEADER = ["task", "split", "n", "tp", "fp", "fn", "tn", "acc", "p", "r", "f1"]


def metrics_csv(report: MetricsReport, task: str, split: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_CSV_HEADER)
    pct = report.as_percent()
    w.writerow([task, split, report.total, report.tp, report.fp, report.fn, report.tn,
                *(f"{pct[k]:.2f}" for k in METRIC_FIELDS)])
    return buf.getvalue()


def report_dict(report: MetricsReport) -> dict:
    return asdict(report)
