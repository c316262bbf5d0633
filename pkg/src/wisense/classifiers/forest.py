"""Random forest with axis-aligned Gini splits, built from first principles.

Trees grow on bootstrap resamples, each split drawing sqrt(F) candidate
features, until leaves are pure or fall below the minimum leaf size. Leaves
store class distributions; prediction is a majority vote of per-tree argmax
classes with ties broken toward the lowest class index. Everything is
deterministic given the seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DegenerateLabels, ShapeMismatch
from ..model import sorted_labels

DEFAULT_TREES = 100
DEFAULT_MIN_LEAF = 2


@dataclass
class _Tree:
    """Flat array representation; node 0 is the root.

    feature[i] == -1 marks a leaf; children reference node indices.
    """

    feature: np.ndarray  # (n_nodes,) int
    threshold: np.ndarray  # (n_nodes,) float
    left: np.ndarray  # (n_nodes,) int
    right: np.ndarray  # (n_nodes,) int
    distribution: np.ndarray  # (n_nodes, n_classes) float


@dataclass(frozen=True)
class ForestModel:
    labels: tuple
    n_features: int
    trees: tuple[_Tree, ...]
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "wisense-forest",
                "version": 1,
                "labels": [getattr(l, "value", l) for l in self.labels],
                "n_features": self.n_features,
                "seed": self.seed,
                "trees": [
                    {
                        "feature": t.feature.tolist(),
                        "threshold": t.threshold.tolist(),
                        "left": t.left.tolist(),
                        "right": t.right.tolist(),
                        "distribution": t.distribution.tolist(),
                    }
                    for t in self.trees
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str, label_type=None) -> "ForestModel":
        obj = json.loads(text)
        if obj.get("format") != "wisense-forest":
            raise ValueError("not a forest model file")
        labels = obj["labels"]
        if label_type is not None:
            labels = [label_type(l) for l in labels]
        trees = tuple(
            _Tree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"], dtype=float),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                distribution=np.asarray(t["distribution"], dtype=float),
            )
            for t in obj["trees"]
        )
        return cls(labels=tuple(labels), n_features=obj["n_features"], trees=trees, seed=obj["seed"])


def _best_split(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    features: np.ndarray,
    min_leaf: int,
) -> tuple[int, float] | None:
    """Lowest weighted Gini impurity over candidate features; None if no valid split."""
    n = len(y)
    onehot = np.eye(n_classes)[y]
    best = None
    best_score = np.inf
    for f in features:
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        sorted_col = col[order]
        cum = np.cumsum(onehot[order], axis=0)  # class counts of the left block
        sizes = np.arange(1, n + 1)
        valid = (
            (sizes[:-1] >= min_leaf)
            & (n - sizes[:-1] >= min_leaf)
            & (sorted_col[:-1] < sorted_col[1:])
        )
        if not valid.any():
            continue
        left = cum[:-1][valid]
        nl = sizes[:-1][valid].astype(float)
        right = cum[-1] - left
        nr = n - nl
        gini_l = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        score = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(score))
        if score[i] < best_score - 1e-12:
            cut = np.flatnonzero(valid)[i]
            best_score = float(score[i])
            best = (int(f), float(0.5 * (sorted_col[cut] + sorted_col[cut + 1])))
    return best


def _grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    rng: np.random.Generator,
    min_leaf: int,
    max_features: int,
) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    dist: list[np.ndarray] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        dist.append(np.zeros(n_classes))
        return len(feature) - 1

    def build(idx: np.ndarray) -> int:
        node = new_node()
        counts = np.bincount(y[idx], minlength=n_classes).astype(float)
        dist[node] = counts / counts.sum()
        if counts.max() == counts.sum() or len(idx) < 2 * min_leaf:
            return node
        cand = rng.choice(x.shape[1], size=min(max_features, x.shape[1]), replace=False)
        split = _best_split(x[idx], y[idx], n_classes, np.sort(cand), min_leaf)
        if split is None:
            return node
        f, thr = split
        go_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left])
        right[node] = build(idx[~go_left])
        return node

    build(np.arange(len(y)))
    return _Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        distribution=np.asarray(dist, dtype=float),
    )


def forest_fit(
    vectors: np.ndarray,
    labels: Sequence,
    n_trees: int = DEFAULT_TREES,
    seed: int = 0,
    min_leaf: int = DEFAULT_MIN_LEAF,
    bootstrap: bool = True,
) -> ForestModel:
    """Fit a random forest on (N x F) feature vectors."""
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch(f"feature matrix must be 2-D, got shape {x.shape}")
    ordered = sorted_labels(labels)
    if len(ordered) < 2:
        raise DegenerateLabels(f"need at least 2 classes, got {len(ordered)}")
    index = {l: i for i, l in enumerate(ordered)}
    y = np.asarray([index[l] for l in labels], dtype=np.int64)
    max_features = max(1, int(round(np.sqrt(x.shape[1]))))

    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([int(seed), t])
        if bootstrap:
            idx = rng.integers(0, len(y), size=len(y))
        else:
            idx = np.arange(len(y))
        trees.append(_grow_tree(x[idx], y[idx], len(ordered), rng, min_leaf, max_features))
    return ForestModel(labels=ordered, n_features=x.shape[1], trees=tuple(trees), seed=int(seed))


def _tree_class(tree: _Tree, row: np.ndarray) -> int:
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if row[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return int(np.argmax(tree.distribution[node]))  # argmax takes the lowest index on ties


def forest_predict(model: ForestModel, vector: np.ndarray):
    """Majority vote across trees; ties break toward the lowest class index."""
    row = np.asarray(vector, dtype=float).ravel()
    if row.shape[0] != model.n_features:
        raise ShapeMismatch(f"expected {model.n_features} features, got {row.shape[0]}")
    votes = np.zeros(len(model.labels), dtype=np.int64)
    for tree in model.trees:
        votes[_tree_class(tree, row)] += 1
    return model.labels[int(np.argmax(votes))]


def forest_predict_batch(model: ForestModel, vectors: np.ndarray) -> list:
    return [forest_predict(model, row) for row in np.asarray(vectors, dtype=float)]
