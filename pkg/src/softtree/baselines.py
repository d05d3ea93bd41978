"""Comparison classifiers: depth-limited gini CART and L2 logistic regression."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DegenerateLabelError, InputError, SchemaError
from .trainer import AdamState, TrainConfig, adam_step, iter_minibatches

# split scores closer than this (relative) are treated as ties
_TIE_RTOL = 1e-12


@dataclass
class CartNode:
    value: np.ndarray
    n_samples: int
    depth: int
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class CartTree:
    nodes: list[CartNode]
    n_features: int
    n_classes: int
    max_depth: int

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes)

    def structure(self):
        """Nested tuples ``(feature, threshold, left, right)`` / ``("leaf", counts)`` for comparisons."""
        def walk(i):
            node = self.nodes[i]
            if node.is_leaf:
                return ("leaf", tuple(np.round(node.value, 12)))
            return (node.feature, node.threshold, walk(node.left), walk(node.right))
        return walk(0)

    def to_dict(self) -> dict:
        return {
            "variant": "DT",
            "config": {"max_depth": self.max_depth, "n_features": self.n_features, "n_classes": self.n_classes},
            "nodes": [
                {"value": n.value.tolist(), "n_samples": n.n_samples, "depth": n.depth,
                 "feature": n.feature, "threshold": n.threshold, "left": n.left, "right": n.right}
                for n in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CartTree":
        try:
            cfg = doc["config"]
            nodes = [CartNode(np.asarray(n["value"], dtype=np.float64), n["n_samples"], n["depth"],
                              n["feature"], n["threshold"], n["left"], n["right"]) for n in doc["nodes"]]
            return cls(nodes, cfg["n_features"], cfg["n_classes"], cfg["max_depth"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed DT document: {exc!r}") from None


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Return ``(feature, threshold)`` maximising the gini decrease, or None."""
    n = len(y)
    onehot = np.eye(n_classes)[y]
    candidates = []  # (feature, thresholds, scores)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        ok = xs[:-1] < xs[1:]
        if not ok.any():
            continue
        n_left = np.arange(1, n)[ok].astype(np.float64)
        left = left[ok]
        right = onehot.sum(axis=0) - left
        # sum_k |child_k| * (1 - gini_k) summed over children; larger is purer
        scores = (left**2).sum(axis=1) / n_left + (right**2).sum(axis=1) / (n - n_left)
        lo, hi = xs[:-1][ok], xs[1:][ok]
        thresholds = (lo + hi) / 2.0
        thresholds = np.where(thresholds >= hi, lo, thresholds)
        candidates.append((f, thresholds, scores))
    if not candidates:
        return None
    best = max(s.max() for _, _, s in candidates)
    tol = _TIE_RTOL * max(1.0, abs(best))
    for f, thresholds, scores in candidates:
        hit = np.flatnonzero(scores >= best - tol)
        if hit.size:
            return f, float(thresholds[hit].min())
    return None


def cart_fit(X, y, max_depth: int = 3, min_samples_split: int = 2, n_classes: int | None = None) -> CartTree:
    """Greedy gini CART; candidate thresholds are midpoints of consecutive distinct values."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("CART needs a non-empty 2-D feature matrix")
    if y.shape != (X.shape[0],):
        raise InputError("labels do not match rows")
    if not np.all(np.isfinite(X)):
        raise InputError("features contain non-finite values")
    if y.min() < 0:
        raise InputError("labels must be non-negative integers")
    n_classes = int(max(y.max() + 1, 2) if n_classes is None else n_classes)
    nodes: list[CartNode] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        node = CartNode(counts / counts.sum(), int(idx.size), depth)
        nodes.append(node)
        pos = len(nodes) - 1
        if depth >= max_depth or idx.size < min_samples_split or np.count_nonzero(counts) <= 1:
            return pos
        found = _best_split(X[idx], y[idx], n_classes)
        if found is None:
            return pos
        node.feature, node.threshold = found
        goes_left = X[idx, node.feature] <= node.threshold
        node.left = grow(idx[goes_left], depth + 1)
        node.right = grow(idx[~goes_left], depth + 1)
        return pos

    grow(np.arange(X.shape[0]), 0)
    return CartTree(nodes, X.shape[1], n_classes, max_depth)


def cart_predict_proba(tree: CartTree, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise InputError(f"tree expects {tree.n_features} features, got shape {X.shape}")
    at = np.zeros(X.shape[0], dtype=np.int64)
    for _ in range(tree.depth):
        for i in np.unique(at):
            node = tree.nodes[i]
            if node.is_leaf:
                continue
            rows = at == i
            at[rows] = np.where(X[rows, node.feature] <= node.threshold, node.left, node.right)
    return np.array([tree.nodes[i].value for i in at]).reshape(X.shape[0], tree.n_classes)


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float = 0.0
    l2: float = 0.0
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"variant": "LR", "config": {"l2": self.l2},
                "weights": np.asarray(self.weights).tolist(), "bias": float(self.bias)}

    @classmethod
    def from_dict(cls, doc: dict) -> "LogRegModel":
        try:
            return cls(np.asarray(doc["weights"], dtype=np.float64), float(doc["bias"]), doc["config"]["l2"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed LR document: {exc!r}") from None


def logreg_loss_grad(params: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray, l2: float):
    """Mean log-loss plus ``l2 * |w|^2 / 2`` and its gradient."""
    z = X @ params["w"] + params["b"][0]
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(params["w"] @ params["w"])
    resid = (expit(z) - y) / len(y)
    return loss, {"w": X.T @ resid + l2 * params["w"], "b": np.array([resid.sum()])}


def logreg_fit(X, y, l2: float = 1e-4, cfg: TrainConfig | None = None) -> LogRegModel:
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or y.shape != (X.shape[0],):
        raise InputError("logistic regression needs a non-empty matrix and matching labels")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("logistic regression labels must be 0/1")
    if np.unique(y).size < 2:
        raise DegenerateLabelError("labels contain a single class")
    params = {"w": np.zeros(X.shape[1]), "b": np.zeros(1)}
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(cfg.shuffle_seed)
    trace = [logreg_loss_grad(params, X, y, l2)[0]]
    for _ in range(cfg.epochs):
        for idx in iter_minibatches(len(y), cfg.batch_size, rng):
            _, grads = logreg_loss_grad(params, X[idx], y[idx], l2)
            params, state = adam_step(params, grads, state, cfg)
        trace.append(logreg_loss_grad(params, X, y, l2)[0])
    return LogRegModel(params["w"], float(params["b"][0]), l2, trace)


def logreg_predict_proba(model: LogRegModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != np.size(model.weights):
        raise InputError(f"model expects {np.size(model.weights)} features, got shape {X.shape}")
    return expit(X @ model.weights + model.bias)
