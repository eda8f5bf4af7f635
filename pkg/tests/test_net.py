import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multidial import net


def test_init_shapes():
    n = net.init_network([3, 80, 80, 5], "relu", seed=7)
    assert [w.shape for w in n.weights] == [(80, 3), (80, 80), (5, 80)]
    assert [b.shape for b in n.biases] == [(80,), (80,), (5,)]
    assert all(np.all(b == 0) for b in n.biases)


def test_init_deterministic():
    a = net.init_network([3, 80, 80, 5], "relu", seed=7)
    b = net.init_network([3, 80, 80, 5], "relu", seed=7)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    c = net.init_network([3, 80, 80, 5], "relu", seed=8)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_scale_bound():
    n = net.init_network([100, 80, 80, 4], seed=3)
    bound = 1.0 / math.sqrt(100)
    assert np.max(np.abs(n.weights[0])) <= bound


def test_init_rejects_short_dims():
    with pytest.raises(net.NetworkConfigError):
        net.init_network([2])
    with pytest.raises(net.NetworkConfigError):
        net.init_network([2, 3])
    with pytest.raises(net.NetworkConfigError):
        net.init_network([2, 0, 3])
    with pytest.raises(net.NetworkConfigError):
        net.init_network([2, 3, 4], hidden_activation="sigmoid")


def test_forward_zero_weights():
    n = net.init_network([4, 8, 8, 3], seed=0)
    for w in n.weights:
        w[:] = 0.0
    out = net.forward(n, np.ones(4))
    assert np.array_equal(out, np.zeros(3))


def test_forward_identity_composition():
    # 1-1-1-1 net, all weights 1, biases 0, relu: relu(relu(2)) = 2.
    n = net.init_network([1, 1, 1, 1], "relu", seed=0)
    for w in n.weights:
        w[:] = 1.0
    assert net.forward(n, np.array([2.0]))[0] == pytest.approx(2.0)


def test_forward_matches_straight_line_oracle():
    # Hand-rolled matrix products, written out without reusing the library.
    n = net.init_network([3, 4, 4, 2], "relu", seed=11)
    x = np.array([0.3, -1.2, 0.5])

    def relu(v):
        return np.where(v > 0, v, 0.0)

    h1 = relu(n.weights[0] @ x + n.biases[0])
    h2 = relu(n.weights[1] @ h1 + n.biases[1])
    expected = n.weights[2] @ h2 + n.biases[2]
    got = net.forward(n, x)
    assert np.max(np.abs(got - expected)) < 1e-9


def test_forward_tanh_oracle():
    n = net.init_network([3, 4, 4, 2], "tanh", seed=5)
    x = np.array([1.0, 0.25, -0.75])
    h1 = np.tanh(n.weights[0] @ x + n.biases[0])
    h2 = np.tanh(n.weights[1] @ h1 + n.biases[1])
    expected = n.weights[2] @ h2 + n.biases[2]
    assert np.max(np.abs(net.forward(n, x) - expected)) < 1e-9


def test_forward_is_pure():
    n = net.init_network([3, 5, 5, 2], seed=1)
    x = np.array([0.1, 0.2, 0.3])
    a = net.forward(n, x)
    b = net.forward(n, x)
    assert np.array_equal(a, b)


def test_forward_dimension_mismatch():
    n = net.init_network([3, 5, 5, 2], seed=1)
    with pytest.raises(net.NetworkInputError):
        net.forward(n, np.zeros(4))


def test_sgd_zero_gradient_when_target_matches():
    n = net.init_network([2, 4, 4, 3], seed=2)
    x = np.array([0.5, -0.5])
    out = net.forward(n, x)
    target = out.copy()
    mask = np.array([1.0, 0.0, 1.0])
    before = [w.copy() for w in n.weights]
    loss = net.sgd_step(n, [(x, target, mask)], net.TrainConfig(learning_rate=0.1))
    assert loss == pytest.approx(0.0)
    for w0, w1 in zip(before, n.weights):
        assert np.array_equal(w0, w1)


def test_sgd_learns_linear_regression():
    # Closed-form least squares for y = 2x is exactly slope 2; the trained
    # net's effective slope must land within 0.05 of it.
    rng = np.random.default_rng(0)
    n = net.init_network([1, 8, 8, 1], "relu", seed=4)
    cfg = net.TrainConfig(learning_rate=0.05)
    xs = rng.uniform(0.2, 2.0, size=200)
    for x in xs:
        xv = np.array([x])
        t = np.array([2.0 * x])
        net.sgd_step(n, [(xv, t, np.ones(1))], cfg)
    slope = (net.forward(n, np.array([1.5]))[0] - net.forward(n, np.array([0.5]))[0]) / 1.0
    assert abs(slope - 2.0) < 0.05


def _finite_difference_grads(n, inputs, targets, masks, kind):
    # Central differences on a scratch copy of every parameter.
    eps = 1e-5
    grads = []
    cfg = net.TrainConfig(learning_rate=0.0)
    for l in range(len(n.weights)):
        gw = np.zeros_like(n.weights[l])
        for idx in np.ndindex(*n.weights[l].shape):
            orig = n.weights[l][idx]
            n.weights[l][idx] = orig + eps
            up = net.sgd_step_arrays(n, inputs, targets, masks, cfg, kind)
            n.weights[l][idx] = orig - eps
            down = net.sgd_step_arrays(n, inputs, targets, masks, cfg, kind)
            n.weights[l][idx] = orig
            gw[idx] = (up - down) / (2 * eps)
        grads.append(gw)
    return grads


def _analytic_grads(n, inputs, targets, masks, kind):
    # Recover gradients from a unit-rate step: grad = (w_before - w_after) / lr.
    lr = 1e-3
    copy = net.clone_network(n)
    net.sgd_step_arrays(copy, inputs, targets, masks, net.TrainConfig(learning_rate=lr), kind)
    return [(w0 - w1) / lr for w0, w1 in zip(n.weights, copy.weights)]


@pytest.mark.parametrize("kind,activation", [
    ("squared_error", "relu"),
    ("squared_error", "tanh"),
    ("hinge", "tanh"),
    ("hinge", "relu"),
])
def test_gradients_match_finite_differences(kind, activation):
    rng = np.random.default_rng(42)
    n = net.init_network([3, 4, 4, 2], activation, seed=9)
    inputs = rng.normal(size=(5, 3))
    if kind == "squared_error":
        targets = rng.normal(size=(5, 2))
    else:
        targets = rng.choice([-1.0, 1.0], size=(5, 2))
    masks = rng.choice([0.0, 1.0], size=(5, 2))
    masks[0] = 1.0  # keep at least one unit in the loss
    numeric = _finite_difference_grads(n, inputs, targets, masks, kind)
    analytic = _analytic_grads(n, inputs, targets, masks, kind)
    for g_num, g_ana in zip(numeric, analytic):
        assert np.max(np.abs(g_num - g_ana)) < 1e-4


def test_sgd_zero_learning_rate_is_identity():
    n = net.init_network([2, 4, 4, 2], seed=3)
    before_w = [w.copy() for w in n.weights]
    before_b = [b.copy() for b in n.biases]
    batch = [(np.array([1.0, -1.0]), np.array([5.0, -5.0]), np.ones(2))]
    net.sgd_step(n, batch, net.TrainConfig(learning_rate=0.0, l2_decay=0.01))
    for w0, w1 in zip(before_w, n.weights):
        assert np.array_equal(w0, w1)
    for b0, b1 in zip(before_b, n.biases):
        assert np.array_equal(b0, b1)


def test_sgd_rejects_empty_batch():
    n = net.init_network([2, 4, 4, 2], seed=3)
    with pytest.raises(net.NetworkInputError):
        net.sgd_step(n, [], net.TrainConfig())


def test_sgd_deterministic_trajectory():
    def run():
        n = net.init_network([2, 6, 6, 1], seed=12)
        cfg = net.TrainConfig(learning_rate=0.02)
        rng = np.random.default_rng(99)
        for _ in range(50):
            x = rng.normal(size=2)
            net.sgd_step(n, [(x, np.array([x.sum()]), np.ones(1))], cfg)
        return n

    a, b = run(), run()
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_clone_weights_copy_and_isolation():
    a = net.init_network([2, 4, 4, 2], seed=1)
    b = net.init_network([2, 4, 4, 2], seed=2)
    net.clone_weights(a, b)
    x = np.array([0.7, -0.3])
    assert np.array_equal(net.forward(a, x), net.forward(b, x))
    out_b = net.forward(b, x).copy()
    net.sgd_step(a, [(x, np.array([9.0, 9.0]), np.ones(2))], net.TrainConfig(0.1))
    assert np.array_equal(net.forward(b, x), out_b)
    assert not np.array_equal(net.forward(a, x), out_b)


def test_clone_weights_architecture_mismatch():
    a = net.init_network([2, 4, 4, 2], seed=1)
    b = net.init_network([2, 4, 4, 3], seed=1)
    with pytest.raises(net.NetworkInputError):
        net.clone_weights(a, b)


def test_checkpoint_round_trip(tmp_path):
    n = net.init_network([3, 4, 4, 2], "tanh", seed=21, output_kind="hinge_margin")
    net.sgd_step(
        n,
        [(np.array([1.0, 2.0, 3.0]), np.array([1.0, -1.0]), np.ones(2))],
        net.TrainConfig(0.05),
        "hinge",
    )
    path = tmp_path / "model.net"
    net.save_network(n, str(path))
    loaded = net.load_network(str(path))
    assert loaded.layer_dims == n.layer_dims
    assert loaded.hidden_activation == "tanh"
    assert loaded.output_kind == "hinge_margin"
    for wa, wb in zip(n.weights, loaded.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(n.biases, loaded.biases):
        assert np.array_equal(ba, bb)


@settings(max_examples=25, deadline=None)
@given(
    dims=st.lists(st.integers(min_value=1, max_value=6), min_size=3, max_size=5),
    seed=st.integers(min_value=0, max_value=1000),
)
def test_forward_shape_property(dims, seed):
    n = net.init_network(dims, seed=seed)
    out = net.forward(n, np.zeros(dims[0]))
    assert out.shape == (dims[-1],)
