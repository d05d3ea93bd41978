import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softtree.errors import ConfigError, InputError, SchemaError
from softtree.model import (
    SoftTree,
    TreeConfig,
    balance_alpha,
    forward,
    grad_batch,
    init_tree,
    loss_batch,
    predict_batch,
)

from conftest import max_rel_error, numeric_gradient, random_tree, scalar_route, zero_tree

SIG1 = 1.0 / (1.0 + math.exp(-1.0))


# --- init_tree ---------------------------------------------------------------

def test_init_depth_one_shapes_and_zero_leaves():
    tree = init_tree(TreeConfig(depth=1, input_dim=2, n_classes=2, seed=7))
    assert len(tree.inner) == 1 and len(tree.leaves) == 2
    for leaf in tree.leaves:
        assert leaf.phi.tolist() == [0.0, 0.0]
    assert tree.b.tolist() == [0.0]


def test_init_is_deterministic():
    cfg = TreeConfig(depth=3, input_dim=5, variant="SMSDT", seed=7)
    a, b = init_tree(cfg), init_tree(cfg)
    for k in a.params():
        assert np.array_equal(a.params()[k], b.params()[k])


def test_init_depth_three_counts():
    tree = init_tree(TreeConfig(depth=3, input_dim=50, n_classes=2))
    assert len(tree.inner) == 7
    assert len(tree.leaves) == 8


def test_init_weight_scale_matches_fan_in():
    tree = init_tree(TreeConfig(depth=8, input_dim=400, seed=1))
    # 255 * 400 draws from Normal(0, 1/400)
    assert tree.w.std() == pytest.approx(1 / 20, rel=0.02)
    sm = init_tree(TreeConfig(depth=6, input_dim=300, variant="SMSDT", hidden_dim=32, seed=2))
    assert sm.layer_w.std() == pytest.approx(math.sqrt(1 / 300), rel=0.02)
    assert sm.w.shape == (63, 34)


@pytest.mark.parametrize("kwargs", [
    dict(depth=0, input_dim=2), dict(depth=2, input_dim=0), dict(depth=2, input_dim=2, n_classes=1),
    dict(depth=2, input_dim=2, variant="XGB"), dict(depth=2, input_dim=2, beta=0.0),
    dict(depth=2, input_dim=2, lam=-1.0), dict(depth=2, input_dim=2, variant="SMSDT", hidden_dim=0),
])
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ConfigError):
        TreeConfig(**kwargs)


def test_hidden_dim_defaults():
    assert TreeConfig(input_dim=10, variant="SMSDT").hidden_dim == 10
    assert TreeConfig(input_dim=100, variant="SMSDT").hidden_dim == 32
    assert TreeConfig(input_dim=100, variant="SDT", hidden_dim=4).hidden_dim is None


# --- forward -----------------------------------------------------------------

def test_zero_tree_depth_one():
    tr = forward(zero_tree(1, 3), np.array([1.0, -2.0, 5.0]))
    assert tr.gates.tolist() == [0.5]
    assert tr.path_probs.tolist() == [0.5, 0.5]
    assert tr.mixture.tolist() == [0.5, 0.5]
    assert tr.arrival.tolist() == [1.0]


@pytest.mark.parametrize("variant", ["SDT", "SMSDT"])
def test_zero_tree_depth_three_uniform_leaves(variant):
    tr = forward(zero_tree(3, 4, variant=variant), np.arange(4.0))
    np.testing.assert_array_equal(tr.path_probs, np.full(8, 1 / 8))
    np.testing.assert_array_equal(tr.gates, np.full(7, 0.5))


def test_single_gate_value():
    tree = zero_tree(1, 2).with_params({"w": np.array([[1.0, 0.0]])})
    assert forward(tree, np.array([1.0, 0.0])).gates[0] == pytest.approx(SIG1, abs=1e-15)
    assert SIG1 == pytest.approx(0.731059, abs=1e-6)


def test_beta_scales_preactivation():
    tree = zero_tree(1, 2).with_params({"w": np.array([[1.0, 0.0]])})
    hot = SoftTree(TreeConfig(depth=1, input_dim=2, beta=3.0), tree.w, tree.b, tree.phi)
    assert forward(hot, np.array([1.0, 0.0])).gates[0] == pytest.approx(1 / (1 + math.exp(-3)))


@pytest.mark.parametrize("variant", ["SDT", "SMSDT"])
def test_forward_matches_scalar_recursion(rng, variant):
    for _ in range(20):
        tree = random_tree(rng, int(rng.integers(1, 4)), 4, variant, hidden_dim=3)
        x = rng.normal(size=4)
        gates, reach = scalar_route(tree, x)
        tr = forward(tree, x)
        np.testing.assert_allclose(tr.gates, gates, rtol=1e-12)
        n_inner = tree.config.n_inner
        np.testing.assert_allclose(tr.arrival, reach[:n_inner], rtol=1e-12)
        np.testing.assert_allclose(tr.path_probs, reach[n_inner:], rtol=1e-12, atol=1e-300)


def test_forward_right_convention():
    # strongly positive pre-activation -> almost everything goes right (leaf 1)
    tree = zero_tree(1, 1).with_params({"w": np.array([[50.0]])})
    tr = forward(tree, np.array([1.0]))
    assert tr.path_probs[1] > 0.999


def test_forward_rejects_bad_input():
    tree = zero_tree(2, 3)
    with pytest.raises(InputError):
        forward(tree, np.array([1.0, np.nan, 0.0]))
    with pytest.raises(InputError):
        forward(tree, np.array([1.0, 2.0]))


def test_forward_is_pure(rng):
    tree = random_tree(rng, 3, 5, "SMSDT")
    x = rng.normal(size=5)
    a, b = forward(tree, x), forward(tree, x)
    assert a.mixture.tobytes() == b.mixture.tobytes()
    assert a.gates.tobytes() == b.gates.tobytes()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), depth=st.integers(1, 4),
       variant=st.sampled_from(["SDT", "SMSDT"]), n_classes=st.integers(2, 4),
       scale=st.floats(0.01, 5.0))
def test_normalisation_property(seed, depth, variant, n_classes, scale):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, depth, 3, variant, n_classes=n_classes, scale=scale)
    X = rng.normal(0, scale, size=(16, 3))
    mix, _ = predict_batch(tree, X)
    assert np.all(mix >= 0)
    np.testing.assert_allclose(mix.sum(axis=1), 1.0, atol=1e-9)
    tr = forward(tree, X[0])
    assert abs(tr.path_probs.sum() - 1.0) < 1e-9
    assert tr.arrival[0] == 1.0


def test_smsdt_ancestor_wiring(rng):
    x = rng.normal(size=3)
    for variant in ("SDT", "SMSDT"):
        tree = random_tree(rng, 3, 3, variant)
        base = forward(tree, x).gates
        bumped = tree.with_params({"b": tree.b + np.eye(7)[0] * 1.5})
        moved = forward(bumped, x).gates
        changed = np.abs(moved - base) > 1e-12
        assert changed[0]
        if variant == "SMSDT":
            assert changed[1:3].all(), "depth-1 nodes see the root as parent"
            assert changed[3:7].all(), "depth-2 nodes see the root as grandparent"
        else:
            assert not changed[1:].any()


# --- predict_batch -----------------------------------------------------------

def test_predict_zero_tree_uniform():
    mix, leaf = predict_batch(zero_tree(2, 3, n_classes=3), np.ones((5, 3)))
    np.testing.assert_allclose(mix, 1 / 3, atol=1e-15)
    assert leaf.tolist() == [0] * 5  # all tied -> lowest index


def test_predict_empty_batch():
    mix, leaf = predict_batch(zero_tree(2, 3), np.empty((0, 3)))
    assert mix.shape == (0, 2) and leaf.shape == (0,)


def test_predict_single_row_equals_forward(rng):
    tree = random_tree(rng, 3, 4, "SMSDT")
    x = rng.normal(size=4)
    mix, leaf = predict_batch(tree, x[None, :])
    tr = forward(tree, x)
    np.testing.assert_allclose(mix[0], tr.mixture, rtol=1e-14)
    assert leaf[0] == int(np.argmax(tr.path_probs))


def test_predict_column_mismatch():
    with pytest.raises(InputError):
        predict_batch(zero_tree(2, 3), np.ones((2, 4)))


# --- loss_batch --------------------------------------------------------------

@pytest.mark.parametrize("depth", [1, 2, 3])
def test_zero_tree_loss_anchor(rng, depth):
    lam = 0.3
    tree = zero_tree(depth, 4, lam=lam)
    X = rng.normal(size=(9, 4))
    y = rng.integers(0, 2, 9)
    vals = loss_batch(tree, X, y)
    assert abs(vals.data_term - math.log(2)) < 1e-12
    expected_pen = sum(-lam * 2.0 ** -int(math.log2(i + 1)) * -math.log(2) for i in range(2**depth - 1))
    assert vals.penalty_term == pytest.approx(expected_pen, rel=1e-12)
    assert vals.total == pytest.approx(vals.data_term + vals.penalty_term, rel=1e-15)


def test_zero_tree_data_term_is_log_c():
    tree = zero_tree(2, 2, n_classes=5)
    assert loss_batch(tree, np.ones((3, 2)), [0, 4, 2]).data_term == pytest.approx(math.log(5), abs=1e-12)


def test_lambda_zero_penalty_exact(rng):
    tree = random_tree(rng, 3, 3, lam=0.0)
    assert loss_batch(tree, rng.normal(size=(4, 3)), [0, 1, 1, 0]).penalty_term == 0.0


def test_hand_evaluated_depth_one_loss():
    tree = SoftTree(TreeConfig(depth=1, input_dim=2, lam=0.0),
                    w=np.array([[1.0, 0.0]]), b=np.zeros(1), phi=np.array([[0.0, 0.0], [2.0, 0.0]]))
    g = 1 / (1 + math.exp(-1))
    expected = -((1 - g) * math.log(0.5) + g * math.log(math.exp(2) / (math.exp(2) + 1)))
    assert loss_batch(tree, [[1.0, 0.0]], [0]).data_term == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(-(0.268941 * math.log(0.5) + 0.731059 * math.log(math.e**2 / (math.e**2 + 1))),
                                     abs=1e-6)


def test_alpha_is_arrival_weighted(rng):
    tree = random_tree(rng, 2, 3)
    X = rng.normal(size=(6, 3))
    alpha = balance_alpha(tree, X)
    acc = np.zeros(3)
    mass = np.zeros(3)
    for x in X:
        gates, reach = scalar_route(tree, x)
        acc += np.array(reach[:3]) * gates
        mass += reach[:3]
    np.testing.assert_allclose(alpha, acc / mass, rtol=1e-12)


def test_alpha_clamped_when_saturated():
    tree = zero_tree(1, 1, lam=1.0).with_params({"w": np.array([[1000.0]])})
    vals = loss_batch(tree, [[1.0], [2.0]], [0, 1])
    assert math.isfinite(vals.penalty_term)
    assert vals.penalty_term == pytest.approx(-0.5 * (math.log(1 - 1e-6) + math.log(1e-6)), rel=1e-9)


@pytest.mark.parametrize("X,y", [(np.empty((0, 2)), []), ([[1.0, 2.0]], [2]), ([[1.0, 2.0]], [-1]),
                                 ([[1.0, 2.0]], [0.5])])
def test_loss_input_errors(X, y):
    with pytest.raises(InputError):
        loss_batch(zero_tree(1, 2), X, y)


# --- grad_batch --------------------------------------------------------------

def test_symmetric_batch_leaf_gradients_equal():
    tree = zero_tree(2, 2)
    x = np.array([0.3, -1.2])
    grads, _ = grad_batch(tree, np.vstack([x, -x]), [1, 1])
    for leaf in range(1, 4):
        np.testing.assert_allclose(grads["phi"][leaf], grads["phi"][0], atol=1e-15)


def test_leaf_gradient_closed_form(rng):
    tree = random_tree(rng, 1, 2, lam=0.0)
    x = rng.normal(size=2)
    grads, _ = grad_batch(tree, x[None], [0])
    tr = forward(tree, x)
    q = np.exp(tree.phi[0]) / np.exp(tree.phi[0]).sum()
    assert grads["phi"][0, 0] == pytest.approx(tr.path_probs[0] * (q[0] - 1), rel=1e-12)


@pytest.mark.parametrize("variant", ["SDT", "SMSDT"])
@pytest.mark.parametrize("depth", [1, 2, 3])
@pytest.mark.parametrize("lam", [0.0, 0.1])
def test_gradient_matches_finite_differences(rng, variant, depth, lam):
    d = 5 if depth < 3 else 2
    tree = random_tree(rng, depth, d, variant, lam=lam, hidden_dim=3)
    X = rng.normal(size=(10, d))
    y = rng.integers(0, 2, 10)
    grads, vals = grad_batch(tree, X, y)
    assert vals == loss_batch(tree, X, y)
    assert max_rel_error(grads, numeric_gradient(tree, X, y)) < 1e-4


def test_gradient_multiclass_and_beta(rng):
    tree = random_tree(rng, 2, 3, "SMSDT", n_classes=3, beta=2.5, hidden_dim=2)
    X = rng.normal(size=(7, 3))
    y = rng.integers(0, 3, 7)
    grads, _ = grad_batch(tree, X, y)
    assert max_rel_error(grads, numeric_gradient(tree, X, y)) < 1e-4


def test_gradient_deterministic_and_shaped(rng):
    tree = random_tree(rng, 3, 4, "SMSDT")
    X = rng.normal(size=(30, 4))
    y = rng.integers(0, 2, 30)
    a, _ = grad_batch(tree, X, y)
    b, _ = grad_batch(tree, X, y)
    assert a.keys() == tree.params().keys()
    for k in a:
        assert a[k].shape == tree.params()[k].shape
        assert a[k].tobytes() == b[k].tobytes()
        assert np.all(np.isfinite(a[k]))


# --- serialization -----------------------------------------------------------

@pytest.mark.parametrize("variant", ["SDT", "SMSDT"])
def test_json_round_trip_exact(rng, variant):
    tree = random_tree(rng, 3, 4, variant)
    doc = json.loads(tree.to_json())
    assert set(doc) >= {"config", "inner", "leaves"}
    back = SoftTree.from_json(tree.to_json())
    assert back.config == tree.config
    for k, v in tree.params().items():
        assert np.array_equal(back.params()[k], v)


def test_from_dict_rejects_garbage():
    with pytest.raises(SchemaError):
        SoftTree.from_dict({"config": {"depth": 1, "input_dim": 2}, "inner": "nope"})
    with pytest.raises(SchemaError):
        SoftTree.from_dict({"config": {"depth": 1, "input_dim": 2, "bogus": 1}, "inner": [], "leaves": []})
