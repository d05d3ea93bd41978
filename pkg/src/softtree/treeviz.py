"""Inspection exports for trained soft trees: dataset-averaged gate statistics,
Graphviz DOT text and JSON-lines training history."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import softmax

from .datakit import Dataset
from .errors import InputError
from .model import SoftTree, _as_matrix, _route
from .trainer import TrainHistory


@dataclass(frozen=True)
class GateTrace:
    mean_gate: np.ndarray  # per inner node, plain mean over rows
    arrival_mass: np.ndarray  # per inner node, mean probability of reaching it
    leaf_mass: np.ndarray  # per leaf, mean path probability
    leaf_probs: np.ndarray  # per leaf, softmax of logits


def gate_trace(tree: SoftTree, dataset: Dataset | np.ndarray) -> GateTrace:
    X = dataset.X if isinstance(dataset, Dataset) else dataset
    X = _as_matrix(tree, X)
    if X.shape[0] == 0:
        raise InputError("cannot trace an empty dataset")
    tr = _route(tree, X)
    n_inner = tree.config.n_inner
    return GateTrace(
        mean_gate=tr.gates.mean(axis=0),
        arrival_mass=tr.reach[:, :n_inner].mean(axis=0),
        leaf_mass=tr.reach[:, n_inner:].mean(axis=0),
        leaf_probs=softmax(tree.phi, axis=1),
    )


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _gate_input_names(tree: SoftTree, feature_names) -> list[str]:
    cfg = tree.config
    if cfg.variant == "SMSDT":
        return [f"h{j}" for j in range(cfg.hidden_dim)] + ["parent", "grandparent"]
    if feature_names is None:
        return [f"x{j}" for j in range(cfg.input_dim)]
    names = [str(n) for n in feature_names]
    if len(names) != cfg.input_dim:
        raise InputError(f"{len(names)} feature names for a tree with {cfg.input_dim} inputs")
    return names


def top_features(weights: np.ndarray, names: list[str], top_k: int) -> list[tuple[str, float]]:
    """Largest-|w| entries, ties broken by lower index."""
    order = sorted(range(len(weights)), key=lambda j: (-abs(weights[j]), j))
    return [(names[j], float(weights[j])) for j in order[:top_k]]


def export_dot(tree: SoftTree, trace: GateTrace, feature_names=None, top_k: int = 3) -> str:
    """Render the tree as a DOT digraph.

    Inner nodes show their ``top_k`` largest-magnitude gate weights, the mean
    gate value (probability of going right) and the mean arrival mass; leaves
    show mean path mass and class probabilities.
    """
    cfg = tree.config
    names = _gate_input_names(tree, feature_names)
    n_inner = cfg.n_inner
    lines = [
        "digraph SoftTree {",
        f"  // {cfg.variant} depth={cfg.depth} inputs={cfg.input_dim} classes={cfg.n_classes}",
        "  // weights are shown in the (standardized) input scale seen by the model",
        '  graph [labelloc="t", label=' + _quote(
            f"{cfg.variant} depth {cfg.depth}; g = P(right); weights on model input scale") + "];",
        '  node [shape=box, fontname="Helvetica"];',
    ]
    for i in range(n_inner):
        rows = [f"node {i}", f"g={trace.mean_gate[i]:.4f} mass={trace.arrival_mass[i]:.4f}"]
        rows += [f"{name}: {w:+.4g}" for name, w in top_features(tree.w[i], names, top_k)]
        rows.append(f"b: {tree.b[i]:+.4g}")
        lines.append(f"  n{i} [label={_quote(chr(10).join(rows))}];")
    for leaf in range(cfg.n_leaves):
        probs = "/".join(f"{p:.3f}" for p in trace.leaf_probs[leaf])
        label = f"leaf {leaf}\nmass={trace.leaf_mass[leaf]:.4f}\n{probs}"
        lines.append(f"  n{n_inner + leaf} [shape=ellipse, label={_quote(label)}];")
    for i in range(n_inner):
        lines.append(f'  n{i} -> n{2 * i + 1} [label="L"];')
        lines.append(f'  n{i} -> n{2 * i + 2} [label="R"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_history(history: TrainHistory, path) -> Path:
    if len(history) == 0:
        raise InputError("history is empty")
    path = Path(path)
    path.write_text(history.to_jsonl(), encoding="utf-8")
    return path


def load_history(path) -> TrainHistory:
    return TrainHistory.from_jsonl(Path(path).read_text(encoding="utf-8"))
