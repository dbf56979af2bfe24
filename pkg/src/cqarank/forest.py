"""Decision-tree ensembles: CART, random forest, AdaBoost and gradient boosting.

All models are binary classifiers whose ``predict_proba`` output is used as a
ranking score. Training is deterministic: split search visits features in
index order and thresholds in ascending order, and keeps the first maximum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "DecisionTree",
    "ForestModel",
    "train_cart",
    "train_random_forest",
    "train_adaboost",
    "train_gbt",
    "predict_proba",
    "log_loss",
    "save_model",
    "load_model",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
_EPS_CLAMP = 1e-10
_LEAF = -1


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf holding ``value[i]``.

    Rows with ``x[feature] <= threshold`` go to ``left``. For classification
    trees ``value`` is the class-1 probability; for the regression trees used by
    gradient boosting it is an additive score.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_features: int
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != _LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != _LEAF
        while np.any(active):
            idx = np.nonzero(active)[0]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active[idx] = self.feature[node[idx]] != _LEAF
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=np.float64),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=np.float64),
            gain=np.array(d["gain"], dtype=np.float64),
            n_features=int(d["n_features"]),
            max_depth=d["max_depth"],
            min_samples_leaf=int(d["min_samples_leaf"]),
        )


@dataclass
class ForestModel:
    kind: str  # "random-forest" | "adaboost" | "gradient-boosted"
    trees: list[DecisionTree]
    n_features: int
    weights: Optional[np.ndarray] = None
    shrinkage: float = 1.0
    init_score: float = 0.0
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("random-forest", "adaboost", "gradient-boosted"):
            raise ValueError(f"unknown forest kind {self.kind!r}")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in (0, 1]")

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "adaboost":
            margin = np.zeros(X.shape[0])
            for w, tree in zip(self.weights, self.trees):
                margin += w * np.where(tree.predict_value(X) >= 0.5, 1.0, -1.0)
            return 2.0 * margin
        if self.kind == "gradient-boosted":
            score = np.full(X.shape[0], self.init_score)
            for tree in self.trees:
                score += self.shrinkage * tree.predict_value(X)
            return score
        raise ValueError("random forests have no additive score")


# -- split search -----------------------------------------------------------


def _gini_gain(sw, swy, total_w, total_wy):
    """Weighted Gini decrease for every candidate cut.

    ``sw``/``swy`` are the left-child running sums of weight and weight*label.
    """
    rw = total_w - sw
    rwy = total_wy - swy
    with np.errstate(divide="ignore", invalid="ignore"):
        pl = swy / sw
        pr = rwy / rw
        child = (sw * 2 * pl * (1 - pl) + rw * 2 * pr * (1 - pr)) / total_w
    p = total_wy / total_w
    return 2 * p * (1 - p) - child


def _sse_gain(sw, swy, total_w, total_wy):
    """Weighted squared-error decrease (variance reduction) per unit weight."""
    rw = total_w - sw
    rwy = total_wy - swy
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = swy**2 / sw + rwy**2 / rw - total_wy**2 / total_w
    return gain / total_w


class _TreeGrower:
    def __init__(
        self,
        X: np.ndarray,
        target: np.ndarray,
        weight: np.ndarray,
        criterion: str,
        max_depth: Optional[int],
        min_samples_leaf: int,
        max_features: Optional[int],
        rng: np.random.Generator,
        leaf_value: Callable[[np.ndarray], float],
    ):
        self.X = X
        self.target = target
        self.weight = weight
        self.gain_fn = _gini_gain if criterion == "gini" else _sse_gain
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.rng = rng
        self.leaf_value = leaf_value
        self.nodes: list[list] = []  # [feature, threshold, left, right, value, gain]

    def _features(self) -> np.ndarray:
        n_feat = self.X.shape[1]
        if self.max_features is None or self.max_features >= n_feat:
            return np.arange(n_feat)
        return np.sort(self.rng.choice(n_feat, self.max_features, replace=False))

    def _best_split(self, idx: np.ndarray):
        feats = self._features()
        n = len(idx)
        msl = self.min_samples_leaf
        if n < 2 * msl:
            return None
        Xs = self.X[np.ix_(idx, feats)]
        order = np.argsort(Xs, axis=0, kind="stable")
        xs = np.take_along_axis(Xs, order, axis=0)
        w = self.weight[idx][order]
        wy = (self.weight[idx] * self.target[idx])[order]
        sw = np.cumsum(w, axis=0)[:-1]
        swy = np.cumsum(wy, axis=0)[:-1]
        total_w = w.sum(axis=0)[0]
        total_wy = wy.sum(axis=0)[0]
        gain = self.gain_fn(sw, swy, total_w, total_wy)
        valid = xs[:-1] < xs[1:]
        counts = np.arange(1, n)[:, None]
        valid &= (counts >= msl) & (n - counts >= msl)
        valid &= (sw > 0) & (total_w - sw > 0)
        gain = np.where(valid, gain, -np.inf)
        # feature-major flattening: first maximum = lowest feature, then lowest threshold
        flat = gain.T.ravel()
        best = int(np.argmax(flat))
        if not np.isfinite(flat[best]):
            return None
        j, pos = divmod(best, n - 1)
        lo, hi = xs[pos, j], xs[pos + 1, j]
        thr = (lo + hi) / 2.0
        if not lo <= thr < hi:
            thr = lo
        feat = int(feats[j])
        go_left = self.X[idx, feat] <= thr
        return feat, float(thr), float(flat[best]), idx[go_left], idx[~go_left]

    def _is_pure(self, idx: np.ndarray) -> bool:
        t = self.target[idx]
        return bool(np.all(t == t[0]))

    def grow(self, idx: np.ndarray, depth: int = 0) -> int:
        node_id = len(self.nodes)
        self.nodes.append([_LEAF, 0.0, -1, -1, self.leaf_value(idx), 0.0])
        if (self.max_depth is not None and depth >= self.max_depth) or self._is_pure(idx):
            return node_id
        split = self._best_split(idx)
        if split is None:
            return node_id
        feat, thr, gain, left_idx, right_idx = split
        left = self.grow(left_idx, depth + 1)
        right = self.grow(right_idx, depth + 1)
        self.nodes[node_id][:4] = [feat, thr, left, right]
        self.nodes[node_id][5] = gain
        return node_id

    def build(self, idx: np.ndarray) -> DecisionTree:
        self.grow(idx)
        cols = list(zip(*self.nodes))
        return DecisionTree(
            feature=np.array(cols[0], dtype=np.int64),
            threshold=np.array(cols[1], dtype=np.float64),
            left=np.array(cols[2], dtype=np.int64),
            right=np.array(cols[3], dtype=np.int64),
            value=np.array(cols[4], dtype=np.float64),
            gain=np.array(cols[5], dtype=np.float64),
            n_features=self.X.shape[1],
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
        )


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-D with one row per label")
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return X, y


def _resolve_max_features(spec: Union[None, int, str], n_features: int) -> Optional[int]:
    if spec is None:
        return None
    if spec == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    return int(spec)


def train_cart(
    X,
    y,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    feature_subsample: Union[None, int, str] = None,
    seed: int = 0,
    sample_weight=None,
) -> DecisionTree:
    """Greedy Gini-split classification tree; leaves hold the class-1 fraction."""
    X, y = _check_xy(X, y)
    w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    wy = w * y

    def leaf(idx):
        total = w[idx].sum()
        return float(wy[idx].sum() / total) if total > 0 else float(y[idx].mean())

    grower = _TreeGrower(
        X, y, w, "gini", max_depth, min_samples_leaf,
        _resolve_max_features(feature_subsample, X.shape[1]),
        np.random.default_rng(seed), leaf,
    )
    return grower.build(np.arange(len(y)))


def train_random_forest(
    X,
    y,
    n_trees: int = 100,
    max_depth: Optional[int] = None,
    seed: int = 0,
    min_samples_leaf: int = 1,
    max_features: Union[None, int, str] = "sqrt",
    bootstrap: bool = True,
) -> ForestModel:
    """Bagged CART trees; tree ``i`` draws its bootstrap and features from ``seed + i``."""
    X, y = _check_xy(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    trees = []
    n = len(y)
    for i in range(n_trees):
        rng = np.random.default_rng(seed + i)
        if bootstrap:
            counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        else:
            counts = np.ones(n)
        rows = np.nonzero(counts)[0]
        tree_seed = int(rng.integers(0, 2**31 - 1))
        tree = train_cart(
            X[rows], y[rows], max_depth, min_samples_leaf, max_features, tree_seed,
            sample_weight=counts[rows],
        )
        trees.append(tree)
    return ForestModel(
        "random-forest", trees, X.shape[1], seed=seed,
        params={"n_trees": n_trees, "max_depth": max_depth, "min_samples_leaf": min_samples_leaf,
                "max_features": max_features, "bootstrap": bootstrap},
    )


def _require_both_classes(y):
    if y.min() == y.max():
        raise ValueError("training labels contain a single class")


def train_adaboost(X, y, n_rounds: int = 100, seed: int = 0, max_depth: int = 1) -> ForestModel:
    """Discrete AdaBoost over weighted Gini trees (stumps by default).

    Round weight is ``0.5 * ln((1 - err) / err)`` with ``err`` clamped away
    from 0 and 1. Boosting stops early once a learner is perfect.
    """
    X, y = _check_xy(X, y)
    _require_both_classes(y)
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    sign = 2.0 * y - 1.0
    w = np.full(len(y), 1.0 / len(y))
    trees, alphas = [], []
    for r in range(n_rounds):
        tree = train_cart(X, y, max_depth=max_depth, seed=seed + r, sample_weight=w)
        pred = np.where(tree.predict_value(X) >= 0.5, 1.0, -1.0)
        err = float(np.clip(w[pred != sign].sum() / w.sum(), _EPS_CLAMP, 1 - _EPS_CLAMP))
        alpha = 0.5 * math.log((1 - err) / err)
        trees.append(tree)
        alphas.append(alpha)
        if err <= _EPS_CLAMP:
            break
        w = w * np.exp(-alpha * sign * pred)
        w /= w.sum()
    return ForestModel(
        "adaboost", trees, X.shape[1], weights=np.array(alphas), seed=seed,
        params={"n_rounds": n_rounds, "max_depth": max_depth},
    )


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_loss(y, p) -> float:
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-15, 1 - 1e-15)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def train_gbt(
    X,
    y,
    n_rounds: int = 100,
    max_depth: int = 3,
    shrinkage: float = 0.1,
    seed: int = 0,
    min_samples_leaf: int = 1,
    loss_trace: Optional[list] = None,
) -> ForestModel:
    """Gradient boosting on logistic loss with Newton-step leaf values.

    Starts from the prior log-odds; each round fits a squared-error regression
    tree to the residuals ``y - p`` and sets each leaf to
    ``sum(y - p) / sum(p * (1 - p))`` over its rows. When ``loss_trace`` is a
    list it receives the training log-loss before the first and after every
    round.
    """
    X, y = _check_xy(X, y)
    _require_both_classes(y)
    if n_rounds < 0:
        raise ValueError("n_rounds must be >= 0")
    prior = float(y.mean())
    init = math.log(prior / (1 - prior))
    score = np.full(len(y), init)
    trees = []
    ones = np.ones_like(y)
    if loss_trace is not None:
        loss_trace.append(log_loss(y, _sigmoid(score)))
    for r in range(n_rounds):
        p = _sigmoid(score)
        residual = y - p
        hess = p * (1 - p)

        def leaf(idx, residual=residual, hess=hess):
            return float(residual[idx].sum() / max(hess[idx].sum(), 1e-12))

        grower = _TreeGrower(
            X, residual, ones, "sse", max_depth, min_samples_leaf, None,
            np.random.default_rng(seed + r), leaf,
        )
        tree = grower.build(np.arange(len(y)))
        trees.append(tree)
        score = score + shrinkage * tree.predict_value(X)
        if loss_trace is not None:
            loss_trace.append(log_loss(y, _sigmoid(score)))
    return ForestModel(
        "gradient-boosted", trees, X.shape[1], shrinkage=shrinkage, init_score=init, seed=seed,
        params={"n_rounds": n_rounds, "max_depth": max_depth, "min_samples_leaf": min_samples_leaf},
    )


def predict_proba(model: Union[DecisionTree, ForestModel], X) -> np.ndarray:
    """Class-1 probability for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got array of shape {X.shape}"
        )
    if isinstance(model, DecisionTree):
        return model.predict_value(X)
    if model.kind == "random-forest":
        total = np.zeros(X.shape[0])
        for tree in model.trees:
            total += tree.predict_value(X)
        return total / len(model.trees)
    return _sigmoid(model.decision_function(X))


def save_model(model: ForestModel) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "n_features": model.n_features,
        "seed": model.seed,
        "shrinkage": model.shrinkage,
        "init_score": model.init_score,
        "weights": None if model.weights is None else model.weights.tolist(),
        "params": model.params,
        "trees": [t.to_dict() for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True)


def load_model(text: str) -> ForestModel:
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported forest format version {version!r}")
    return ForestModel(
        kind=doc["kind"],
        trees=[DecisionTree.from_dict(t) for t in doc["trees"]],
        n_features=int(doc["n_features"]),
        weights=None if doc["weights"] is None else np.array(doc["weights"]),
        shrinkage=float(doc["shrinkage"]),
        init_score=float(doc["init_score"]),
        seed=int(doc["seed"]),
        params=doc["params"],
    )
