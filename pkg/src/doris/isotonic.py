"""Isotonic-regression calibration of classifier scores.

Pool-adjacent-violators over score-sorted binary labels. Points with exactly
equal scores are pooled before fitting, and block means are kept as integer
(label-sum, count) pairs, so merging order cannot perturb the result. The
fitted mapping is a right-continuous non-decreasing step function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IsotonicCalibrator:
    """Step-function mapping from raw score to probability.

    `thresholds` are ascending block-start scores; scores at or above
    thresholds[i] (and below thresholds[i+1]) map to values[i]. Scores below
    thresholds[0] map to values[0].
    """

    thresholds: tuple[float, ...]
    values: tuple[float, ...]

    def probability(self, score: float) -> float:
        index = int(np.searchsorted(self.thresholds, score, side="right")) - 1
        if index < 0:
            index = 0
        return self.values[index]

    def probabilities(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        indices = np.searchsorted(self.thresholds, scores, side="right") - 1
        np.clip(indices, 0, len(self.values) - 1, out=indices)
        return np.asarray(self.values, dtype=np.float64)[indices]


def fit_isotonic(scores: np.ndarray, labels: np.ndarray) -> IsotonicCalibrator:
    """Fit the monotone least-squares step function to (score, label) pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D arrays")
    n = scores.shape[0]
    if n < 2:
        raise ValueError(f"isotonic fit requires at least 2 points, got {n}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary")

    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = labels[order].astype(np.int64)

    # Pool exact score ties into (start_score, label_sum, count) points.
    points: list[list[float | int]] = []
    i = 0
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        points.append([float(s[i]), int(y[i:j].sum()), j - i])
        i = j

    # PAVA: merge while a block's mean exceeds its successor's. The mean
    # comparison is done by integer cross-multiplication, hence exact.
    blocks: list[list[float | int]] = []
    for start, ysum, count in points:
        cur = [start, ysum, count]
        while blocks and blocks[-1][1] * cur[2] > cur[1] * blocks[-1][2]:
            prev = blocks.pop()
            cur = [prev[0], prev[1] + cur[1], prev[2] + cur[2]]
        blocks.append(cur)

    thresholds = tuple(float(b[0]) for b in blocks)
    values = tuple(min(1.0, max(0.0, b[1] / b[2])) for b in blocks)
    return IsotonicCalibrator(thresholds=thresholds, values=values)
