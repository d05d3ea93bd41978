"""Soft decision trees: parameters, probabilistic routing, loss and analytic gradients.

Inner nodes are stored in heap order (node ``i`` has children ``2i+1`` and
``2i+2``); leaf ``l`` sits at heap position ``n_inner + l``.  A gate value
``g`` is the probability of routing RIGHT, ``1 - g`` routes LEFT.

Two variants share the same machinery:

* ``SDT``: gate ``g_i = sigmoid(beta * (w_i . x + b_i))``.
* ``SMSDT``: every node owns a linear input layer ``h_i = A_i x + c_i`` and
  also sees the gate values of its parent and grandparent (0.5 when absent),
  ``g_i = sigmoid(beta * (w_i . [h_i, g_parent, g_grandparent] + b_i))``.

The training objective is the path-weighted leaf cross-entropy plus a
gate-balance penalty that pushes each node's batch-average right-routing
probability towards 0.5, with weight decaying as ``2**-depth``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .errors import ConfigError, InputError, SchemaError

VARIANTS = ("SDT", "SMSDT")
ALPHA_CLAMP = 1e-6
_NO_ANCESTOR = 0.5

Gradients = dict[str, np.ndarray]


@dataclass(frozen=True)
class TreeConfig:
    depth: int = 3
    input_dim: int = 1
    n_classes: int = 2
    variant: str = "SDT"
    hidden_dim: int | None = None
    beta: float = 1.0
    lam: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConfigError(f"depth must be an integer >= 1, got {self.depth!r}")
        if int(self.input_dim) != self.input_dim or self.input_dim < 1:
            raise ConfigError(f"input_dim must be an integer >= 1, got {self.input_dim!r}")
        if int(self.n_classes) != self.n_classes or self.n_classes < 2:
            raise ConfigError(f"n_classes must be an integer >= 2, got {self.n_classes!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigError(f"beta must be positive, got {self.beta!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lambda must be non-negative, got {self.lam!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.variant == "SDT":
            hidden = None
        elif self.hidden_dim is None:
            hidden = min(int(self.input_dim), 32)
        else:
            hidden = self.hidden_dim
            if int(hidden) != hidden or hidden < 1:
                raise ConfigError(f"hidden_dim must be an integer >= 1, got {hidden!r}")
        object.__setattr__(self, "hidden_dim", None if hidden is None else int(hidden))
        for name in ("depth", "input_dim", "n_classes", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n_inner(self) -> int:
        return 2**self.depth - 1

    @property
    def n_leaves(self) -> int:
        return 2**self.depth

    @property
    def gate_dim(self) -> int:
        """Length of each inner node's gate weight vector."""
        if self.variant == "SDT":
            return self.input_dim
        return self.hidden_dim + 2

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "input_dim": self.input_dim,
            "n_classes": self.n_classes,
            "variant": self.variant,
            "hidden_dim": self.hidden_dim,
            "beta": self.beta,
            "lambda": self.lam,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SchemaError(f"bad tree config: {exc}") from None


def node_depth(i: int) -> int:
    return (i + 1).bit_length() - 1


def parent_of(i: int) -> int | None:
    return (i - 1) // 2 if i > 0 else None


@dataclass(frozen=True)
class InnerNode:
    w: np.ndarray
    b: float
    layer_w: np.ndarray | None = None
    layer_b: np.ndarray | None = None


@dataclass(frozen=True)
class LeafNode:
    phi: np.ndarray


@dataclass
class SoftTree:
    """All trainable parameters, stacked per node.

    ``w`` is ``(n_inner, gate_dim)``, ``b`` is ``(n_inner,)``, ``phi`` is
    ``(n_leaves, n_classes)``; SM-SDT trees also carry ``layer_w``
    ``(n_inner, hidden_dim, input_dim)`` and ``layer_b`` ``(n_inner, hidden_dim)``.
    """

    config: TreeConfig
    w: np.ndarray
    b: np.ndarray
    phi: np.ndarray
    layer_w: np.ndarray | None = None
    layer_b: np.ndarray | None = None

    def __post_init__(self):
        cfg = self.config
        expected = {
            "w": (cfg.n_inner, cfg.gate_dim),
            "b": (cfg.n_inner,),
            "phi": (cfg.n_leaves, cfg.n_classes),
        }
        if cfg.variant == "SMSDT":
            expected["layer_w"] = (cfg.n_inner, cfg.hidden_dim, cfg.input_dim)
            expected["layer_b"] = (cfg.n_inner, cfg.hidden_dim)
        elif self.layer_w is not None or self.layer_b is not None:
            raise ConfigError("SDT trees have no per-node input layer")
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is None:
                raise ConfigError(f"missing parameter {name!r}")
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @property
    def param_names(self) -> tuple[str, ...]:
        if self.config.variant == "SMSDT":
            return ("w", "b", "layer_w", "layer_b", "phi")
        return ("w", "b", "phi")

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.param_names}

    def with_params(self, params: dict[str, np.ndarray]) -> "SoftTree":
        return replace(self, **{k: np.array(v, dtype=np.float64) for k, v in params.items()})

    def copy(self) -> "SoftTree":
        return self.with_params(self.params())

    @property
    def inner(self) -> list[InnerNode]:
        lw = self.layer_w if self.layer_w is not None else [None] * self.config.n_inner
        lb = self.layer_b if self.layer_b is not None else [None] * self.config.n_inner
        return [InnerNode(self.w[i], float(self.b[i]), lw[i], lb[i]) for i in range(self.config.n_inner)]

    @property
    def leaves(self) -> list[LeafNode]:
        return [LeafNode(row) for row in self.phi]

    def to_dict(self) -> dict:
        inner = []
        for node in self.inner:
            rec = {"w": node.w.tolist(), "b": node.b}
            if node.layer_w is not None:
                rec["layer_w"] = node.layer_w.tolist()
                rec["layer_b"] = node.layer_b.tolist()
            inner.append(rec)
        return {
            "variant": self.config.variant,
            "routing": "gate value is the probability of going RIGHT (child 2i+2)",
            "config": self.config.to_dict(),
            "inner": inner,
            "leaves": [{"phi": leaf.phi.tolist()} for leaf in self.leaves],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SoftTree":
        try:
            cfg = TreeConfig.from_dict(doc["config"])
            inner = doc["inner"]
            kw = {
                "w": np.array([n["w"] for n in inner], dtype=np.float64).reshape(len(inner), -1),
                "b": np.array([n["b"] for n in inner], dtype=np.float64),
                "phi": np.array([leaf["phi"] for leaf in doc["leaves"]], dtype=np.float64),
            }
            if cfg.variant == "SMSDT":
                kw["layer_w"] = np.array([n["layer_w"] for n in inner], dtype=np.float64)
                kw["layer_b"] = np.array([n["layer_b"] for n in inner], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed tree document: {exc!r}") from None
        return cls(cfg, **kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SoftTree":
        return cls.from_dict(json.loads(text))


def init_tree(config: TreeConfig) -> SoftTree:
    """Seeded Normal(0, 1/fan_in) weights, zero biases, zero leaf logits."""
    rng = np.random.default_rng(config.seed)
    n, d = config.n_inner, config.input_dim
    layer_w = layer_b = None
    if config.variant == "SMSDT":
        h = config.hidden_dim
        layer_w = rng.normal(0.0, math.sqrt(1.0 / d), size=(n, h, d))
        layer_b = np.zeros((n, h))
    w = rng.normal(0.0, math.sqrt(1.0 / config.gate_dim), size=(n, config.gate_dim))
    return SoftTree(
        config,
        w=w,
        b=np.zeros(n),
        phi=np.zeros((config.n_leaves, config.n_classes)),
        layer_w=layer_w,
        layer_b=layer_b,
    )


@dataclass(frozen=True)
class ForwardTrace:
    gates: np.ndarray
    arrival: np.ndarray
    path_probs: np.ndarray
    mixture: np.ndarray


@dataclass
class _BatchTrace:
    gates: np.ndarray  # (n, n_inner)
    reach: np.ndarray  # (n, n_inner + n_leaves), heap order
    inputs: list = field(default_factory=list)  # per-node gate inputs (SM-SDT only)


class LossValues(NamedTuple):
    total: float
    data_term: float
    penalty_term: float


def _as_matrix(tree: SoftTree, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if X.shape[1] != tree.config.input_dim:
        raise InputError(f"expected {tree.config.input_dim} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise InputError("features contain non-finite values")
    return X


def _route(tree: SoftTree, X: np.ndarray) -> _BatchTrace:
    cfg = tree.config
    n, n_inner = X.shape[0], cfg.n_inner
    inputs = []
    if cfg.variant == "SDT":
        gates = expit(cfg.beta * (X @ tree.w.T + tree.b))
    else:
        gates = np.empty((n, n_inner))
        absent = np.full(n, _NO_ANCESTOR)
        for i in range(n_inner):
            p = parent_of(i)
            gp = parent_of(p) if p is not None else None
            h = X @ tree.layer_w[i].T + tree.layer_b[i]
            u = np.column_stack([
                h,
                gates[:, p] if p is not None else absent,
                gates[:, gp] if gp is not None else absent,
            ])
            inputs.append(u)
            gates[:, i] = expit(cfg.beta * (u @ tree.w[i] + tree.b[i]))
    reach = np.empty((n, n_inner + cfg.n_leaves))
    reach[:, 0] = 1.0
    for i in range(n_inner):
        reach[:, 2 * i + 1] = reach[:, i] * (1.0 - gates[:, i])
        reach[:, 2 * i + 2] = reach[:, i] * gates[:, i]
    return _BatchTrace(gates, reach, inputs)


def forward(tree: SoftTree, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.config.input_dim,):
        raise InputError(f"expected a vector of length {tree.config.input_dim}, got shape {x.shape}")
    tr = _route(tree, _as_matrix(tree, x[None, :]))
    n_inner = tree.config.n_inner
    path = tr.reach[0, n_inner:]
    return ForwardTrace(
        gates=tr.gates[0],
        arrival=tr.reach[0, :n_inner],
        path_probs=path,
        mixture=path @ softmax(tree.phi, axis=1),
    )


def predict_batch(tree: SoftTree, X) -> tuple[np.ndarray, np.ndarray]:
    """Mixture class distributions ``(n, C)`` and the most probable leaf per row."""
    X = _as_matrix(tree, X)
    tr = _route(tree, X)
    path = tr.reach[:, tree.config.n_inner:]
    mixture = path @ softmax(tree.phi, axis=1)
    return mixture, np.argmax(path, axis=1)


def predict_scores(tree: SoftTree, X) -> np.ndarray:
    """Positive-class mixture probability, the score used for AUC."""
    return predict_batch(tree, X)[0][:, 1]


def _check_labels(tree: SoftTree, X, y) -> tuple[np.ndarray, np.ndarray]:
    X = _as_matrix(tree, X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise InputError("empty batch")
    if y.shape != (X.shape[0],):
        raise InputError(f"labels have shape {y.shape}, expected ({X.shape[0]},)")
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise InputError("labels must be integers")
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= tree.config.n_classes:
        raise InputError(f"labels must lie in [0, {tree.config.n_classes})")
    return X, y


def _balance(tree: SoftTree, tr: _BatchTrace):
    n_inner = tree.config.n_inner
    arrive = tr.reach[:, :n_inner]
    mass = arrive.sum(axis=0)
    right = (arrive * tr.gates).sum(axis=0)
    raw = right / np.maximum(mass, np.finfo(np.float64).tiny)
    alpha = np.clip(raw, ALPHA_CLAMP, 1.0 - ALPHA_CLAMP)
    return mass, raw, alpha


def _depth_weights(n_inner: int) -> np.ndarray:
    return np.array([2.0 ** -node_depth(i) for i in range(n_inner)])


def balance_alpha(tree: SoftTree, X) -> np.ndarray:
    """Clamped arrival-weighted mean gate value per inner node over ``X``."""
    X = _as_matrix(tree, X)
    if X.shape[0] == 0:
        raise InputError("empty batch")
    return _balance(tree, _route(tree, X))[2]


def _losses(tree, tr, y, lam):
    n_inner = tree.config.n_inner
    log_q = log_softmax(tree.phi, axis=1)
    path = tr.reach[:, n_inner:]
    data = -float(np.sum(path * log_q[:, y].T)) / len(y)
    _, raw, alpha = _balance(tree, tr)
    per_node = 0.5 * (np.log(alpha) + np.log1p(-alpha))
    penalty = -lam * float(np.sum(_depth_weights(n_inner) * per_node)) if lam else 0.0
    return LossValues(data + penalty, data, penalty), log_q, raw, alpha


def loss_batch(tree: SoftTree, X, y, lam: float | None = None) -> LossValues:
    X, y = _check_labels(tree, X, y)
    lam = tree.config.lam if lam is None else lam
    return _losses(tree, _route(tree, X), y, lam)[0]


def grad_batch(tree: SoftTree, X, y, lam: float | None = None) -> tuple[Gradients, LossValues]:
    """Exact gradient of ``loss_batch(...).total`` by reverse accumulation."""
    X, y = _check_labels(tree, X, y)
    lam = tree.config.lam if lam is None else lam
    cfg = tree.config
    n, n_inner, beta = X.shape[0], cfg.n_inner, cfg.beta
    tr = _route(tree, X)
    values, log_q, raw, alpha = _losses(tree, tr, y, lam)
    gates, reach = tr.gates, tr.reach
    path = reach[:, n_inner:]

    onehot = np.zeros((n, cfg.n_classes))
    onehot[np.arange(n), y] = 1.0
    q = np.exp(log_q)
    d_phi = (path.sum(axis=0)[:, None] * q - path.T @ onehot) / n

    d_reach = np.zeros_like(reach)
    d_reach[:, n_inner:] = -log_q[:, y].T / n
    d_gate = np.zeros_like(gates)
    if lam:
        mass = reach[:, :n_inner].sum(axis=0)
        safe_mass = np.maximum(mass, np.finfo(np.float64).tiny)
        active = (raw > ALPHA_CLAMP) & (raw < 1.0 - ALPHA_CLAMP)
        d_alpha = -lam * _depth_weights(n_inner) * 0.5 * (1.0 / alpha - 1.0 / (1.0 - alpha)) * active
        d_reach[:, :n_inner] += d_alpha * (gates - raw) / safe_mass
        d_gate += d_alpha * reach[:, :n_inner] / safe_mass

    d_w = np.zeros_like(tree.w)
    d_b = np.zeros_like(tree.b)
    smsdt = cfg.variant == "SMSDT"
    if smsdt:
        hidden = cfg.hidden_dim
        d_lw = np.zeros_like(tree.layer_w)
        d_lb = np.zeros_like(tree.layer_b)
    # descendants have larger heap indices, so every adjoint is complete when visited
    for i in reversed(range(n_inner)):
        left, right = 2 * i + 1, 2 * i + 2
        g = gates[:, i]
        d_gate[:, i] += reach[:, i] * (d_reach[:, right] - d_reach[:, left])
        d_reach[:, i] += d_reach[:, left] * (1.0 - g) + d_reach[:, right] * g
        dz = d_gate[:, i] * beta * g * (1.0 - g)
        u = tr.inputs[i] if smsdt else X
        d_w[i] = dz @ u
        d_b[i] = dz.sum()
        if smsdt:
            dh = np.outer(dz, tree.w[i, :hidden])
            d_lw[i] = dh.T @ X
            d_lb[i] = dh.sum(axis=0)
            p = parent_of(i)
            if p is not None:
                d_gate[:, p] += dz * tree.w[i, hidden]
                gp = parent_of(p)
                if gp is not None:
                    d_gate[:, gp] += dz * tree.w[i, hidden + 1]

    grads = {"w": d_w, "b": d_b, "phi": d_phi}
    if smsdt:
        grads["layer_w"] = d_lw
        grads["layer_b"] = d_lb
    return grads, values
