"""Classifiers used as the biased model, the innocuous model and the OOD learner."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BlackBoxModel, Dataset, DataError, FeatureSchema

FORMAT_VERSION = 1


class TrainingError(ValueError):
    pass


# --------------------------------------------------------------------------
# Rule models
# --------------------------------------------------------------------------

class RuleModel(BlackBoxModel):
    """Predicts class 1 iff one feature is on the "true" side of a threshold.

    For binary integer-coded features a threshold of 0.5 means "feature == 1";
    it also behaves sensibly on fractional (averaged) background values.
    """

    def __init__(self, feature_index: int, threshold: float = 0.5, positive_when_true: bool = True,
                 name: str = "rule"):
        self.feature_index = int(feature_index)
        self.threshold = float(threshold)
        self.positive_when_true = bool(positive_when_true)
        self.name = name

    def _proba1(self, X):
        hit = X[:, self.feature_index] >= self.threshold
        return (hit if self.positive_when_true else ~hit).astype(float)

    def to_dict(self):
        return {"type": "rule", "feature_index": self.feature_index, "threshold": self.threshold,
                "positive_when_true": self.positive_when_true, "name": self.name}

    def __repr__(self):
        return f"RuleModel({self.name!r}, feature={self.feature_index})"


def _binary_feature(schema: FeatureSchema, j: int):
    f = schema.features[j]
    if not (f.is_categorical and f.cardinality == 2):
        raise DataError(f"feature {f.name!r} must be binary categorical")


def make_biased_rule(schema: FeatureSchema) -> RuleModel:
    """Class 1 exactly when the sensitive feature is 1."""
    _binary_feature(schema, schema.sensitive_index)
    return RuleModel(schema.sensitive_index, name="biased")


def make_unbiased_rule(schema: FeatureSchema, which_uncorrelated: int) -> RuleModel:
    """Class 1 exactly when the given uncorrelated feature is 1."""
    if which_uncorrelated not in schema.uncorrelated_indices:
        raise DataError(f"feature index {which_uncorrelated} is not declared uncorrelated")
    _binary_feature(schema, which_uncorrelated)
    return RuleModel(which_uncorrelated, name="innocuous")


# --------------------------------------------------------------------------
# Logistic regression
# --------------------------------------------------------------------------

def _check_trainable(train: Dataset):
    if len(train) < 2:
        raise TrainingError("need at least 2 training rows")
    if np.unique(train.y).size < 2:
        raise TrainingError("training set contains a single class")


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


@dataclass(frozen=True)
class LogisticHyper:
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 0.0
    standardize: bool = True


class LogisticModel(BlackBoxModel):
    def __init__(self, weights, bias, mean=None, scale=None, loss_history=()):
        self.weights = np.asarray(weights, dtype=float)
        self.bias = float(bias)
        m = self.weights.size
        self.mean = np.zeros(m) if mean is None else np.asarray(mean, dtype=float)
        self.scale = np.ones(m) if scale is None else np.asarray(scale, dtype=float)
        self.loss_history = list(loss_history)

    def _proba1(self, X):
        return _sigmoid(((X - self.mean) / self.scale) @ self.weights + self.bias)

    def to_dict(self):
        return {"type": "logistic", "weights": self.weights.tolist(), "bias": self.bias,
                "mean": self.mean.tolist(), "scale": self.scale.tolist()}


def _log_loss(Z, y, w, b, l2):
    t = Z @ w + b
    # log(1 + e^t) - y t, computed stably
    loss = np.mean(np.logaddexp(0.0, t) - y * t)
    return loss + 0.5 * l2 * float(w @ w)


def train_logistic(train: Dataset, hyper: LogisticHyper | None = None) -> LogisticModel:
    """Full-batch gradient descent on the mean log-loss (plus optional L2).

    Starts from zero weights, so the result is a deterministic function of
    the data and hyperparameters.
    """
    hyper = hyper or LogisticHyper()
    _check_trainable(train)
    X, y = train.X, train.y.astype(float)
    if hyper.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Z = (X - mean) / scale
    n = Z.shape[0]
    w, b = np.zeros(Z.shape[1]), 0.0
    history = [_log_loss(Z, y, w, b, hyper.l2)]
    for _ in range(hyper.epochs):
        r = _sigmoid(Z @ w + b) - y
        w = w - hyper.learning_rate * (Z.T @ r / n + hyper.l2 * w)
        b = b - hyper.learning_rate * r.mean()
        history.append(_log_loss(Z, y, w, b, hyper.l2))
    return LogisticModel(w, b, mean, scale, history)


# --------------------------------------------------------------------------
# Random forest of Gini trees
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 50
    max_depth: int = 12
    seed: int = 0
    max_features: int | str | None = "sqrt"
    min_samples_leaf: int = 1
    bootstrap: bool = True


@dataclass
class Tree:
    """Flat array representation; ``feature == -1`` marks a leaf."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # fraction of class-1 training rows reaching the node

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            idx = rows[active]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def vote(self, X: np.ndarray) -> np.ndarray:
        return (self.value[self.apply(X)] > 0.5).astype(float)

    def to_dict(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(), "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=float))


def _best_split(X, y, features, min_leaf):
    """Lowest weighted Gini impurity split over the candidate features."""
    n = y.size
    best = (np.inf, -1, 0.0)
    total_pos = y.sum()
    for j in features:
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        pos_left = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        if min_leaf > 1:
            valid &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        n_right = n - n_left
        pos_right = total_pos - pos_left
        gini_left = 1.0 - (pos_left / n_left) ** 2 - (1.0 - pos_left / n_left) ** 2
        gini_right = 1.0 - (pos_right / n_right) ** 2 - (1.0 - pos_right / n_right) ** 2
        score = np.where(valid, n_left * gini_left + n_right * gini_right, np.inf)
        k = int(np.argmin(score))
        if score[k] < best[0] - 1e-12:
            best = (score[k], j, 0.5 * (xs[k] + xs[k + 1]))
    return best


def _grow_tree(X, y, max_depth, n_sub, min_leaf, rng) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(yy):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(yy.mean()))
        return len(feature) - 1

    root = new_node(y)
    stack = [(root, np.arange(y.size), 0)]
    m = X.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        yy = y[idx]
        if depth >= max_depth or yy.size < 2 or yy.min() == yy.max():
            continue
        feats = rng.choice(m, size=n_sub, replace=False) if n_sub < m else np.arange(m)
        score, j, thr = _best_split(X[idx], yy, feats, min_leaf)
        parent_impurity = yy.size * (1.0 - yy.mean() ** 2 - (1.0 - yy.mean()) ** 2)
        if j < 0 or score >= parent_impurity - 1e-12:
            continue
        go_left = X[idx, j] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = int(j), float(thr)
        left[node] = new_node(y[li])
        right[node] = new_node(y[ri])
        stack.append((left[node], li, depth + 1))
        stack.append((right[node], ri, depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


class ForestModel(BlackBoxModel):
    """Bagged Gini trees; the class-1 probability is the fraction of trees voting 1."""

    def __init__(self, trees, hyper: ForestHyper | None = None, tree_seeds=()):
        self.trees = list(trees)
        self.hyper = hyper or ForestHyper(n_trees=len(self.trees))
        self.tree_seeds = list(tree_seeds)

    def _proba1(self, X):
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += t.vote(X)
        return votes / len(self.trees)

    def to_dict(self):
        h = self.hyper
        return {"type": "forest", "n_trees": h.n_trees, "max_depth": h.max_depth, "seed": h.seed,
                "max_features": h.max_features, "min_samples_leaf": h.min_samples_leaf,
                "bootstrap": h.bootstrap, "tree_seeds": self.tree_seeds,
                "trees": [t.to_dict() for t in self.trees]}


def _n_subfeatures(max_features, m):
    if max_features is None:
        return m
    if max_features == "sqrt":
        return max(1, int(np.sqrt(m)))
    k = int(max_features)
    if not 1 <= k <= m:
        raise TrainingError(f"max_features must lie in 1..{m}")
    return k


def train_forest(train: Dataset, hyper: ForestHyper | None = None) -> ForestModel:
    hyper = hyper or ForestHyper()
    _check_trainable(train)
    if hyper.max_depth < 1:
        raise TrainingError("max_depth must be >= 1")
    if hyper.n_trees < 1:
        raise TrainingError("n_trees must be >= 1")
    X, y = train.X, train.y.astype(float)
    n = y.size
    n_sub = _n_subfeatures(hyper.max_features, X.shape[1])
    tree_seeds = [int(s.generate_state(1, dtype=np.uint64)[0])
                  for s in np.random.SeedSequence(hyper.seed).spawn(hyper.n_trees)]
    trees = []
    for s in tree_seeds:
        rng = np.random.default_rng(s)
        idx = rng.integers(0, n, size=n) if hyper.bootstrap else np.arange(n)
        trees.append(_grow_tree(X[idx], y[idx], hyper.max_depth, n_sub, hyper.min_samples_leaf, rng))
    return ForestModel(trees, hyper, tree_seeds)


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def classification_metrics(y_true, y_pred) -> ClassificationMetrics:
    """Binary metrics with class 1 positive; undefined ratios are reported as 0."""
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    if y_true.size == 0:
        raise ValueError("cannot evaluate on an empty set")
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassificationMetrics(float(np.mean(y_true == y_pred)), precision, recall, f1)


def evaluate(model: BlackBoxModel, dataset: Dataset) -> ClassificationMetrics:
    return classification_metrics(dataset.y, model.predict(dataset.X))


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

def model_to_dict(model) -> dict:
    return {"format_version": FORMAT_VERSION, **model.to_dict()}


def model_from_dict(d: dict) -> BlackBoxModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')!r}")
    kind = d.get("type")
    if kind == "rule":
        return RuleModel(d["feature_index"], d["threshold"], d["positive_when_true"], d.get("name", "rule"))
    if kind == "logistic":
        return LogisticModel(d["weights"], d["bias"], d["mean"], d["scale"])
    if kind == "forest":
        hyper = ForestHyper(d["n_trees"], d["max_depth"], d["seed"], d["max_features"],
                            d["min_samples_leaf"], d["bootstrap"])
        return ForestModel([Tree.from_dict(t) for t in d["trees"]], hyper, d["tree_seeds"])
    raise ValueError(f"unknown model type {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path) -> BlackBoxModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
