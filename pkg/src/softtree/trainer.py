"""Mini-batch Adam training with seeded shuffling and per-epoch history."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .datakit import Dataset, split
from .errors import ConfigError, DivergenceError, InputError, InternalError
from .metrics import roc_auc
from .model import SoftTree, balance_alpha, grad_batch, loss_batch, predict_scores


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_seed: int = 0
    history_every: int = 1
    val_fraction: float = 0.0
    keep_snapshots: bool = False

    def __post_init__(self):
        for name in ("epochs", "batch_size", "history_every"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError(f"val_fraction must lie in [0, 1), got {self.val_fraction!r}")
        if not 0 <= int(self.shuffle_seed) < 2**64:
            raise ConfigError("shuffle_seed must be a 64-bit unsigned integer")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, hyper: TrainConfig):
    """One bias-corrected Adam update; returns new ``(params, state)`` without mutating inputs."""
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise InternalError(f"parameter keys {sorted(params)} vs gradient keys {sorted(grads)}")
    t = state.t + 1
    b1, b2 = hyper.adam_beta1, hyper.adam_beta2
    lr_t = hyper.learning_rate
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if np.shape(g) != np.shape(p) or np.shape(state.m[k]) != np.shape(p):
            raise InternalError(f"{k}: parameter shape {np.shape(p)} but gradient shape {np.shape(g)}")
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params[k] = p - lr_t * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
        m_new[k], v_new[k] = m, v
    return new_params, AdamState(m_new, v_new, t)


def iter_minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """One fresh permutation per call; the last partial batch is kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


@dataclass
class HistoryRecord:
    epoch: int
    loss_total: float
    loss_data: float
    loss_penalty: float
    alpha: list[float]
    val_auc: float | None = None
    params: dict[str, list] | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HistoryRecord":
        return cls(**d)


@dataclass
class TrainHistory:
    records: list[HistoryRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i) -> HistoryRecord:
        return self.records[i]

    def append(self, rec: HistoryRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise InternalError("history epochs must be strictly increasing")
        self.records.append(rec)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainHistory":
        hist = cls()
        for line in text.splitlines():
            if line.strip():
                hist.append(HistoryRecord.from_dict(json.loads(line)))
        return hist


def _record(tree, X, y, epoch, cfg, val) -> HistoryRecord:
    values = loss_batch(tree, X, y)
    if not math.isfinite(values.total):
        raise DivergenceError(epoch)
    val_auc = None
    if val is not None:
        val_auc = roc_auc(predict_scores(tree, val.X), val.y).auc
    snapshot = {k: p.tolist() for k, p in tree.params().items()} if cfg.keep_snapshots else None
    return HistoryRecord(
        epoch, values.total, values.data_term, values.penalty_term,
        balance_alpha(tree, X).tolist(), val_auc, snapshot,
    )


def train(tree: SoftTree, train_data: Dataset, cfg: TrainConfig = TrainConfig()):
    """Fit ``tree`` with Adam; returns ``(trained_tree, history)``.

    History holds the untrained state as epoch 0, then every
    ``history_every``-th epoch and always the last one.
    """
    if len(train_data) == 0:
        raise InputError("training set is empty")
    if train_data.n_features != tree.config.input_dim:
        raise InputError(f"tree expects {tree.config.input_dim} features, data has {train_data.n_features}")
    val = None
    if cfg.val_fraction > 0:
        train_data, val = split(train_data, 1.0 - cfg.val_fraction, seed=cfg.shuffle_seed)
    X, y = train_data.X, train_data.y
    rng = np.random.default_rng(cfg.shuffle_seed)
    state = AdamState.zeros_like(tree.params())
    history = TrainHistory()
    history.append(_record(tree, X, y, 0, cfg, val))
    for epoch in range(1, cfg.epochs + 1):
        for idx in iter_minibatches(len(y), cfg.batch_size, rng):
            grads, values = grad_batch(tree, X[idx], y[idx])
            if not math.isfinite(values.total):
                raise DivergenceError(epoch)
            params, state = adam_step(tree.params(), grads, state, cfg)
            tree = tree.with_params(params)
        if epoch % cfg.history_every == 0 or epoch == cfg.epochs:
            history.append(_record(tree, X, y, epoch, cfg, val))
    return tree, history
