import math

import numpy as np
import pytest

from softtree.model import SoftTree, TreeConfig, init_tree, loss_batch


def random_tree(rng, depth, d, variant="SDT", lam=0.1, n_classes=2, hidden_dim=None, scale=0.7, beta=1.0):
    """Seeded tree with every parameter perturbed away from the init anchor."""
    cfg = TreeConfig(depth=depth, input_dim=d, n_classes=n_classes, variant=variant,
                     hidden_dim=hidden_dim, lam=lam, beta=beta, seed=int(rng.integers(2**32)))
    tree = init_tree(cfg)
    return tree.with_params({k: v + rng.normal(0.0, scale, v.shape) for k, v in tree.params().items()})


def zero_tree(depth, d, n_classes=2, variant="SDT", lam=0.1, hidden_dim=None) -> SoftTree:
    tree = init_tree(TreeConfig(depth=depth, input_dim=d, n_classes=n_classes, variant=variant,
                                hidden_dim=hidden_dim, lam=lam))
    return tree.with_params({k: np.zeros_like(v) for k, v in tree.params().items()})


def numeric_gradient(tree, X, y, h=1e-5):
    """Central differences of loss_batch(...).total, one coordinate at a time."""
    params = tree.params()
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            bumped = {k: v.copy() for k, v in params.items()}
            bumped[name][idx] = arr[idx] + h
            f_plus = loss_batch(tree.with_params(bumped), X, y).total
            bumped[name][idx] = arr[idx] - h
            f_minus = loss_batch(tree.with_params(bumped), X, y).total
            g[idx] = (f_plus - f_minus) / (2 * h)
        out[name] = g
    return out


def max_rel_error(analytic: dict, numeric: dict, floor=1e-6) -> float:
    worst = 0.0
    for k in numeric:
        a, n = analytic[k], numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def scalar_route(tree: SoftTree, x):
    """Pure-python recursion over the heap; independent of the vectorised routing."""
    cfg = tree.config
    gates = {}

    def gate(i):
        if i in gates:
            return gates[i]
        if cfg.variant == "SDT":
            z = sum(wj * xj for wj, xj in zip(tree.w[i], x)) + tree.b[i]
        else:
            h = [sum(a * b for a, b in zip(row, x)) + c for row, c in zip(tree.layer_w[i], tree.layer_b[i])]
            parent = (i - 1) // 2 if i > 0 else None
            grand = (parent - 1) // 2 if parent else None
            s = [gate(parent) if parent is not None else 0.5, gate(grand) if grand is not None else 0.5]
            z = sum(wj * uj for wj, uj in zip(tree.w[i], h + s)) + tree.b[i]
        gates[i] = 1.0 / (1.0 + math.exp(-cfg.beta * z))
        return gates[i]

    n_inner = cfg.n_inner
    reach = [1.0] + [0.0] * (n_inner + cfg.n_leaves - 1)
    for i in range(n_inner):
        g = gate(i)
        reach[2 * i + 1] = reach[i] * (1 - g)
        reach[2 * i + 2] = reach[i] * g
    return [gates[i] for i in range(n_inner)], reach


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
