"""Gradient-boosted regression trees for binary classification.

Logistic loss on labels mapped to {-1,+1}; the constant initial score is the
class log-odds, each tree fits the negative gradient with exact greedy
squared-error splits, and leaf values take a one-step Newton estimate.
Everything is deterministic: split ties break toward the lowest feature
index, then the lowest threshold, so identical data and parameters always
produce byte-identical serialized models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .isotonic import IsotonicCalibrator

MODEL_SCHEMA_VERSION = "1"

_MIN_HESSIAN = 1e-16


class ModelFormatError(ValueError):
    """Raised when a serialized model fails schema validation."""


@dataclass
class GBTParams:
    n_trees: int = 300
    learning_rate: float = 0.1
    max_depth: int = 6
    min_leaf: int = 20
    subsample: float = 1.0
    subsample_seed: int = 0
    pos_weight: float = 1.0


class RegressionTree:
    """Array-backed binary tree; feature[i] == -1 marks node i as a leaf."""

    def __init__(self) -> None:
        self.feature: np.ndarray = np.zeros(0, dtype=np.int64)
        self.threshold: np.ndarray = np.zeros(0, dtype=np.float64)
        self.left: np.ndarray = np.zeros(0, dtype=np.int64)
        self.right: np.ndarray = np.zeros(0, dtype=np.int64)
        self.value: np.ndarray = np.zeros(0, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Route every row to its leaf; rows with x[feature] < threshold go left."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while active.size:
            current = node[active]
            go_left = X[active, self.feature[current]] < self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RegressionTree":
        tree = cls()
        try:
            feature = obj["feature"]
            lengths = {len(obj[k]) for k in ("feature", "threshold", "left", "right", "value")}
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"tree is missing field {exc}") from exc
        if len(lengths) != 1 or not feature:
            raise ModelFormatError("tree arrays are empty or of unequal length")
        tree.feature = np.asarray(obj["feature"], dtype=np.int64)
        tree.threshold = np.asarray(obj["threshold"], dtype=np.float64)
        tree.left = np.asarray(obj["left"], dtype=np.int64)
        tree.right = np.asarray(obj["right"], dtype=np.int64)
        tree.value = np.asarray(obj["value"], dtype=np.float64)
        return tree


class _TreeBuilder:
    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_leaf(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def add_split(self, feature: int, threshold: float) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def freeze(self) -> RegressionTree:
        tree = RegressionTree()
        tree.feature = np.asarray(self.feature, dtype=np.int64)
        tree.threshold = np.asarray(self.threshold, dtype=np.float64)
        tree.left = np.asarray(self.left, dtype=np.int64)
        tree.right = np.asarray(self.right, dtype=np.int64)
        tree.value = np.asarray(self.value, dtype=np.float64)
        return tree


def _best_split(
    sorted_vals: np.ndarray, sorted_grad: np.ndarray, min_leaf: int
) -> tuple[int, int, float] | None:
    """Exact greedy split over per-column presorted values/gradients.

    Returns (feature, split position, threshold) maximizing the reduction in
    squared error of the gradient residuals, or None when no split with
    positive gain and min_leaf-sized children exists. Ties break toward the
    lowest feature index, then the lowest threshold.
    """
    n = sorted_vals.shape[0]
    if n < 2 * min_leaf or n < 2:
        return None
    csum = np.cumsum(sorted_grad, axis=0)
    total = csum[-1, :]
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = float(n) - n_left
    s_left = csum[:-1, :]
    s_right = total[None, :] - s_left
    gain = (
        s_left**2 / n_left[:, None]
        + s_right**2 / n_right[:, None]
        - (total**2 / float(n))[None, :]
    )
    valid = sorted_vals[:-1, :] < sorted_vals[1:, :]
    if min_leaf > 1:
        sized = (n_left >= min_leaf) & (n_right >= min_leaf)
        valid &= sized[:, None]
    gain = np.where(valid, gain, -np.inf)

    col_pos = np.argmax(gain, axis=0)
    col_gain = gain[col_pos, np.arange(gain.shape[1])]
    feature = int(np.argmax(col_gain))
    best_gain = col_gain[feature]
    if not np.isfinite(best_gain) or best_gain <= 0.0:
        return None
    pos = int(col_pos[feature])
    lo = float(sorted_vals[pos, feature])
    hi = float(sorted_vals[pos + 1, feature])
    threshold = 0.5 * (lo + hi)
    if not lo < threshold:  # adjacent floats: keep the partition consistent
        threshold = hi
    return feature, pos, threshold


def _partition_sorted(sorted_rows: np.ndarray, member: np.ndarray, n_child: int) -> np.ndarray:
    """Restrict a per-column sorted row-index matrix to the rows flagged in
    `member`, preserving order. Every column keeps exactly n_child rows."""
    keep = member[sorted_rows]
    flat = sorted_rows.T.ravel()[keep.T.ravel()]
    return flat.reshape(sorted_rows.shape[1], n_child).T


def _fit_tree(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    idx: np.ndarray,
    params: GBTParams,
) -> RegressionTree:
    """Grow one regression tree on the gradient, Newton-valued leaves.

    Rows are argsorted per feature once at the root; child nodes inherit
    order by stable partition, so deeper levels never re-sort.
    """
    builder = _TreeBuilder()
    member = np.zeros(X.shape[0], dtype=bool)

    def leaf_value(rows: np.ndarray) -> float:
        return float(grad[rows].sum() / max(hess[rows].sum(), _MIN_HESSIAN))

    def grow(sorted_rows: np.ndarray, depth_left: int) -> int:
        rows = sorted_rows[:, 0]
        split = None
        if depth_left > 0:
            split = _best_split(
                X[sorted_rows, np.arange(sorted_rows.shape[1])[None, :]],
                grad[sorted_rows],
                params.min_leaf,
            )
        if split is None:
            return builder.add_leaf(leaf_value(rows))
        feature, pos, threshold = split
        left_rows = sorted_rows[: pos + 1, feature]
        node = builder.add_split(feature, threshold)
        member[left_rows] = True
        sorted_left = _partition_sorted(sorted_rows, member, pos + 1)
        member[rows] = ~member[rows]
        sorted_right = _partition_sorted(sorted_rows, member, rows.size - (pos + 1))
        member[rows] = False
        builder.left[node] = grow(sorted_left, depth_left - 1)
        builder.right[node] = grow(sorted_right, depth_left - 1)
        return node

    root_sorted = idx[np.argsort(X[idx], axis=0, kind="stable")]
    grow(root_sorted, params.max_depth)
    return builder.freeze()


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(labels: np.ndarray, scores: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Mean logistic loss log(1+exp(-sign(y)*score)) with labels in {0,1}."""
    signed = 2.0 * np.asarray(labels, dtype=np.float64) - 1.0
    per_row = np.logaddexp(0.0, -signed * np.asarray(scores, dtype=np.float64))
    if weights is None:
        return float(per_row.mean())
    return float(np.average(per_row, weights=weights))


@dataclass
class BoostedModel:
    base_score: float
    learning_rate: float
    trees: list[RegressionTree]
    n_features: int
    # Per-iteration training loss (length n_trees+1); not serialized.
    train_losses: list[float] = field(default_factory=list, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected feature matrix with {self.n_features} columns, got {X.shape}"
            )
        scores = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            scores += self.learning_rate * tree.predict(X)
        return scores

    def raw_score(self, x: np.ndarray) -> float:
        return float(self.raw_scores(np.asarray(x, dtype=np.float64)[None, :])[0])

    def predict_label_raw(self, x: np.ndarray) -> int:
        """Sign readout on the uncalibrated ensemble score."""
        return int(self.raw_score(x) > 0.0)


def train(features: np.ndarray, labels: np.ndarray, params: GBTParams | None = None) -> BoostedModel:
    """Fit the boosted ensemble; bit-deterministic given (data, params)."""
    params = params or GBTParams()
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"feature matrix {X.shape} does not match {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise ValueError("training requires at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    y = y.astype(np.float64)
    n_pos = float(np.sum(y == 1))
    n_neg = float(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("training requires both classes to be present")

    weights = np.where(y == 1, params.pos_weight, 1.0)
    base_score = math.log((params.pos_weight * n_pos) / n_neg)
    scores = np.full(X.shape[0], base_score, dtype=np.float64)
    rng = np.random.default_rng(params.subsample_seed)

    trees: list[RegressionTree] = []
    losses = [logistic_loss(y, scores, weights)]
    all_rows = np.arange(X.shape[0], dtype=np.int64)
    for _ in range(params.n_trees):
        p = _sigmoid(scores)
        grad = weights * (y - p)  # negative gradient of the logistic loss
        hess = weights * p * (1.0 - p)
        if params.subsample < 1.0:
            keep = max(2, int(params.subsample * X.shape[0]))
            rows = np.sort(rng.permutation(X.shape[0])[:keep]).astype(np.int64)
        else:
            rows = all_rows
        tree = _fit_tree(X, grad, hess, rows, params)
        scores += params.learning_rate * tree.predict(X)
        losses.append(logistic_loss(y, scores, weights))
        trees.append(tree)

    model = BoostedModel(
        base_score=base_score,
        learning_rate=params.learning_rate,
        trees=trees,
        n_features=X.shape[1],
    )
    model.train_losses = losses
    return model


def save_model(model: BoostedModel, calibrator: IsotonicCalibrator | None, path: str | Path) -> None:
    obj = {
        "version": MODEL_SCHEMA_VERSION,
        "base_score": float(model.base_score),
        "learning_rate": float(model.learning_rate),
        "n_features": int(model.n_features),
        "trees": [tree.to_dict() for tree in model.trees],
        "calibrator": (
            {
                "thresholds": [float(t) for t in calibrator.thresholds],
                "values": [float(v) for v in calibrator.values],
            }
            if calibrator is not None
            else None
        ),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[BoostedModel, IsotonicCalibrator | None]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ModelFormatError("model file must hold a JSON object")
    if obj.get("version") != MODEL_SCHEMA_VERSION:
        raise ModelFormatError(
            f"unsupported model schema version {obj.get('version')!r}, "
            f"expected {MODEL_SCHEMA_VERSION!r}"
        )
    try:
        model = BoostedModel(
            base_score=float(obj["base_score"]),
            learning_rate=float(obj["learning_rate"]),
            trees=[RegressionTree.from_dict(t) for t in obj["trees"]],
            n_features=int(obj["n_features"]),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"model file is missing field {exc}") from exc
    raw_cal = obj.get("calibrator")
    calibrator = None
    if raw_cal is not None:
        try:
            calibrator = IsotonicCalibrator(
                thresholds=tuple(float(t) for t in raw_cal["thresholds"]),
                values=tuple(float(v) for v in raw_cal["values"]),
            )
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"calibrator is missing field {exc}") from exc
    return model, calibrator
