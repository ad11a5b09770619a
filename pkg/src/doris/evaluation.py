"""Cohort splitting, classification metrics, and report emission.

AUROC is the exact Mann-Whitney statistic (ties count half) and AUPRC is
average precision (the step-wise sum over descending-score thresholds, tied
blocks entering together). Both are computed from integer tie-block counts,
so input order never matters. Average precision is used instead of
trapezoidal interpolation because linear interpolation between
precision-recall points overstates the area.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import UserRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def part(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "validation", "test"):
            raise ValueError(f"unknown split part {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    auroc: float
    auprc: float
    threshold: float
    counts: dict[str, int]
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auroc": self.auroc,
            "auprc": self.auprc,
            "threshold": self.threshold,
            "counts": dict(self.counts),
            "flags": list(self.flags),
        }


def split_cohort(records: Sequence[UserRecord], seed: int) -> Split:
    """Stratified 7:1:2 split by user count; train and validation take the
    floor per class and the remainder goes to test."""
    by_label: dict[int, list[str]] = {}
    for record in records:
        if record.label is None:
            raise ValueError(f"user {record.user_id!r} has no label; cannot split")
        by_label.setdefault(record.label, []).append(record.user_id)
    if len(by_label) < 2:
        raise ValueError("cohort must contain both classes")

    rng = random.Random(seed)
    train: list[str] = []
    validation: list[str] = []
    test: list[str] = []
    for label in sorted(by_label):
        ids = sorted(by_label[label])
        if len(ids) < 10:
            logger.warning("class %d has only %d members; split will be coarse", label, len(ids))
        rng.shuffle(ids)
        n = len(ids)
        n_train = (7 * n) // 10
        n_val = n // 10
        train.extend(ids[:n_train])
        validation.extend(ids[n_train:n_train + n_val])
        test.extend(ids[n_train + n_val:])
    return Split(train=tuple(sorted(train)), validation=tuple(sorted(validation)), test=tuple(sorted(test)))


def _validate_pair(labels, scores) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("labels and scores must be equal-length 1-D arrays")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    return y.astype(np.int64), s


def precision_recall_f1(labels, predictions) -> tuple[float, float, float]:
    """Confusion-matrix P/R/F1 with positive class 1. Zero predicted
    positives yields P = 0 (flagged by compute_metrics)."""
    y, pred = _validate_pair(labels, predictions)
    if not np.all((pred == 0) | (pred == 1)):
        raise ValueError("predictions must be binary")
    tp = int(np.sum((y == 1) & (pred == 1)))
    fp = int(np.sum((y == 0) & (pred == 1)))
    fn = int(np.sum((y == 1) & (pred == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _tie_blocks(y: np.ndarray, s: np.ndarray) -> list[tuple[int, int]]:
    """(n_pos, n_neg) per tied-score block, in descending score order."""
    order = np.argsort(-s, kind="stable")
    s = s[order]
    y = y[order]
    blocks: list[tuple[int, int]] = []
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        pos = int(np.sum(y[i:j]))
        blocks.append((pos, (j - i) - pos))
        i = j
    return blocks


def auroc(labels, scores) -> float:
    """P(score+ > score-) + 0.5 * P(score+ == score-), computed exactly."""
    y, s = _validate_pair(labels, scores)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc requires both classes")
    wins = 0  # counted in halves to stay in integer arithmetic
    neg_below = n_neg
    for pos, neg in _tie_blocks(y, s):
        neg_below -= neg
        wins += 2 * pos * neg_below + pos * neg
    return wins / (2.0 * n_pos * n_neg)


def auprc(labels, scores) -> float:
    """Average precision: sum of (R_i - R_{i-1}) * P_i over descending-score
    thresholds, all members of a tied block entering together."""
    y, s = _validate_pair(labels, scores)
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise ValueError("auprc requires at least one positive")
    ap = 0.0
    tp = 0
    fp = 0
    prev_recall = 0.0
    for pos, neg in _tie_blocks(y, s):
        tp += pos
        fp += neg
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def compute_metrics(
    labels, raw_scores, probabilities, threshold: float = 0.5
) -> MetricsReport:
    """Full report: ranking metrics on the raw scores (no calibration-induced
    ties), threshold metrics on the calibrated probabilities."""
    y, s = _validate_pair(labels, raw_scores)
    _, p = _validate_pair(labels, probabilities)
    pred = (p >= threshold).astype(np.int64)
    tp = int(np.sum((y == 1) & (pred == 1)))
    fp = int(np.sum((y == 0) & (pred == 1)))
    tn = int(np.sum((y == 0) & (pred == 0)))
    fn = int(np.sum((y == 1) & (pred == 0)))
    precision, recall, f1 = precision_recall_f1(y, pred)
    flags = []
    if tp + fp == 0:
        flags.append("no_predicted_positives")
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        auroc=auroc(y, s),
        auprc=auprc(y, s),
        threshold=threshold,
        counts={"tp": tp, "fp": fp, "tn": tn, "fn": fn},
        flags=tuple(flags),
    )


METRIC_NAMES = ("precision", "recall", "f1", "auroc", "auprc")


def mean_metrics(reports: Sequence[MetricsReport]) -> dict[str, float]:
    """Per-metric arithmetic mean over repeated runs."""
    if not reports:
        raise ValueError("mean_metrics requires at least one report")
    return {
        name: float(np.mean([getattr(r, name) for r in reports])) for name in METRIC_NAMES
    }


def render_table(metrics: MetricsReport) -> str:
    lines = [
        f"{'metric':<12}{'value':>10}",
        "-" * 22,
    ]
    for name in METRIC_NAMES:
        lines.append(f"{name:<12}{getattr(metrics, name):>10.4f}")
    counts = metrics.counts
    lines.append("-" * 22)
    lines.append(
        f"threshold {metrics.threshold:.2f}  tp {counts['tp']}  fp {counts['fp']}  "
        f"tn {counts['tn']}  fn {counts['fn']}"
    )
    if metrics.flags:
        lines.append("flags: " + ", ".join(metrics.flags))
    return "\n".join(lines) + "\n"


def emit_report(
    metrics: MetricsReport,
    path: str | Path,
    config_digest: str = "",
    data_digest: str = "",
    extra: dict | None = None,
) -> dict:
    """Write report.json plus a human-readable .txt beside it; no timestamps,
    so identical inputs re-emit identical bytes."""
    path = Path(path)
    obj = metrics.to_dict()
    obj["config_digest"] = config_digest
    obj["data_digest"] = data_digest
    if extra:
        obj.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    path.with_suffix(".txt").write_text(render_table(metrics), encoding="utf-8")
    return obj
