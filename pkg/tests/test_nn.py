"""Dense-network numerics: forward, exact gradients, Adam."""

import json

import numpy as np
import pytest

from graphhrl.nn import AdamState, DenseNet, adam_step, backward


def batch_loss(net, batch):
    """Reference objective: weighted sum of squared errors."""
    total = 0.0
    for x, target, weight in batch:
        diff = net.forward(np.asarray(x, dtype=float)) - np.asarray(target, dtype=float)
        total += weight * float(np.dot(diff, diff))
    return total


def finite_difference_grads(net, batch, h=1e-5):
    """Central-difference gradients of batch_loss, per parameter entry."""
    grads = []
    for w, b in zip(net.weights, net.biases):
        layer = []
        for arr in (w, b):
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = batch_loss(net, batch)
                flat[i] = orig - h
                down = batch_loss(net, batch)
                flat[i] = orig
                g.reshape(-1)[i] = (up - down) / (2 * h)
            layer.append(g)
        grads.append(tuple(layer))
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            # floor guards coordinates whose gradient is ~0, where the
            # central-difference noise would dominate a pure ratio
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def random_net(rng, dims=(3, 6, 6, 2)):
    return DenseNet.create(dims[0], dims[-1], hidden_dim=dims[1],
                           hidden_layers=len(dims) - 2, rng=rng)


def random_batch(rng, net, size=4):
    return [
        (rng.normal(size=net.in_dim), rng.normal(size=net.out_dim),
         float(rng.uniform(0.2, 2.0)))
        for _ in range(size)
    ]


def preactivation_margin(net, batch):
    """Smallest |hidden preactivation| over the batch.

    The objective is only differentiable away from the ReLU kinks; a
    central difference that crosses one diverges from the one-sided
    analytic gradient, so gradient checks must sample clear of them.
    """
    margin = np.inf
    for x, _, _ in batch:
        h = np.asarray(x, dtype=float)
        for w, b in zip(net.weights[:-1], net.biases[:-1]):
            z = w @ h + b
            margin = min(margin, float(np.min(np.abs(z))))
            h = np.maximum(z, 0.0)
    return margin


def differentiable_case(rng, dims=(3, 6, 6, 2), size=4, margin=1e-3):
    while True:
        net = random_net(rng, dims)
        batch = random_batch(rng, net, size)
        if preactivation_margin(net, batch) > margin:
            return net, batch


class TestForward:
    def test_zero_net_is_zero_map(self):
        net = DenseNet([np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
        assert np.array_equal(net.forward([1.0, -2.0, 3.0]), np.zeros(2))

    def test_single_layer_arithmetic(self):
        net = DenseNet([np.array([[1.0, 2.0], [3.0, 4.0]])], [np.zeros(2)])
        assert np.array_equal(net.forward([1.0, 1.0]), np.array([3.0, 7.0]))

    def test_forward_is_deterministic(self):
        net = DenseNet.create(2, 4, hidden_dim=16, hidden_layers=3,
                              rng=np.random.default_rng(7))
        x = np.array([0.3, -1.2])
        first = net.forward(x)
        assert np.array_equal(first, net.forward(x))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        net = random_net(rng)
        X = rng.normal(size=(5, 3))
        batched = net.forward_batch(X)
        for i in range(5):
            assert np.allclose(batched[i], net.forward(X[i]), atol=1e-12)

    def test_shape_errors(self):
        net = random_net(np.random.default_rng(0))
        with pytest.raises(ValueError):
            net.forward([1.0, 2.0])
        with pytest.raises(ValueError):
            net.forward_batch(np.zeros((3, 5)))

    def test_dimension_chaining_enforced(self):
        with pytest.raises(ValueError):
            DenseNet([np.zeros((4, 3)), np.zeros((2, 5))], [np.zeros(4), np.zeros(2)])

    def test_relu_hidden_identity_output(self):
        # single hidden unit with negative preactivation is clamped; the
        # output layer is not
        net = DenseNet([np.array([[1.0]]), np.array([[1.0]])],
                       [np.zeros(1), np.zeros(1)])
        assert net.forward([-3.0])[0] == 0.0
        assert net.forward([2.0])[0] == 2.0
        single = DenseNet([np.array([[1.0]])], [np.zeros(1)])
        assert single.forward([-3.0])[0] == -3.0


class TestBackward:
    def test_zero_net_zero_target(self):
        net = DenseNet([np.zeros((2, 2))], [np.zeros(2)])
        grads, loss = backward(net, [([1.0, 2.0], [0.0, 0.0], 1.0)])
        assert loss == 0.0
        assert all(np.all(gw == 0) and np.all(gb == 0) for gw, gb in grads)

    def test_scalar_net_hand_gradient(self):
        # y = w*x with x=1, target 0, w=2: loss w^2 = 4, dL/dw = 2w = 4
        net = DenseNet([np.array([[2.0]])], [np.zeros(1)])
        grads, loss = backward(net, [([1.0], [0.0], 1.0)])
        assert loss == pytest.approx(4.0)
        assert grads[0][0][0, 0] == pytest.approx(4.0)

    def test_empty_batch_rejected(self):
        net = random_net(np.random.default_rng(1))
        with pytest.raises(ValueError):
            backward(net, [])

    def test_gradients_match_finite_differences(self):
        # 100 random nets/batches; the analytic path must agree with the
        # independent central-difference oracle
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            net, batch = differentiable_case(rng)
            grads, _ = backward(net, batch)
            numeric = finite_difference_grads(net, batch)
            worst = max(worst, max_relative_error(grads, numeric))
        assert worst < 1e-4

    def test_loss_non_negative(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            net = random_net(rng)
            _, loss = backward(net, random_batch(rng, net))
            assert loss >= 0.0

    def test_loss_matches_reference(self):
        rng = np.random.default_rng(11)
        net = random_net(rng)
        batch = random_batch(rng, net)
        _, loss = backward(net, batch)
        assert loss == pytest.approx(batch_loss(net, batch), rel=1e-12)


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        net = random_net(np.random.default_rng(8))
        before = [w.copy() for w in net.weights]
        state = AdamState(net, learning_rate=0.1)
        zero = [(np.zeros_like(w), np.zeros_like(b))
                for w, b in zip(net.weights, net.biases)]
        adam_step(net, zero, state)
        assert state.step_count == 1
        for w, old in zip(net.weights, before):
            assert np.array_equal(w, old)

    def test_first_step_is_sign_scaled(self):
        # bias-corrected first step moves by -lr * g / (|g| + eps)
        net = DenseNet([np.array([[1.0]])], [np.zeros(1)])
        state = AdamState(net, learning_rate=0.01, epsilon=1e-8)
        adam_step(net, [(np.array([[3.0]]), np.zeros(1))], state)
        expected = 1.0 - 0.01 * 3.0 / (3.0 + 1e-8)
        assert net.weights[0][0, 0] == pytest.approx(expected, rel=1e-9)

    def test_determinism(self):
        rng = np.random.default_rng(9)
        net_a = random_net(rng)
        net_b = net_a.copy()
        grads = [(np.ones_like(w), np.ones_like(b))
                 for w, b in zip(net_a.weights, net_a.biases)]
        sa, sb = AdamState(net_a, learning_rate=0.01), AdamState(net_b, learning_rate=0.01)
        for _ in range(3):
            adam_step(net_a, grads, sa)
            adam_step(net_b, grads, sb)
        for wa, wb in zip(net_a.weights, net_b.weights):
            assert np.array_equal(wa, wb)

    def test_shape_mismatch_rejected(self):
        net = random_net(np.random.default_rng(10))
        state = AdamState(net)
        bad = [(np.zeros((1, 1)), np.zeros(1)) for _ in net.weights]
        with pytest.raises(ValueError):
            adam_step(net, bad, state)

    def test_small_step_rarely_increases_loss(self):
        rng = np.random.default_rng(77)
        improved = 0
        trials = 100
        for _ in range(trials):
            net = random_net(rng)
            batch = random_batch(rng, net)
            state = AdamState(net, learning_rate=1e-5)
            before = batch_loss(net, batch)
            grads, _ = backward(net, batch)
            adam_step(net, grads, state)
            improved += batch_loss(net, batch) <= before
        assert improved >= 0.95 * trials


class TestSerialization:
    def test_bit_exact_round_trip(self, tmp_path):
        net = DenseNet.create(3, 2, hidden_dim=8, hidden_layers=2,
                              rng=np.random.default_rng(42))
        path = tmp_path / "net.json"
        net.save(path)
        loaded = DenseNet.load(path)
        for w, lw in zip(net.weights, loaded.weights):
            assert np.array_equal(w, lw)
        for b, lb in zip(net.biases, loaded.biases):
            assert np.array_equal(b, lb)
        assert loaded.layer_dims == net.layer_dims

    def test_payload_metadata_checked(self):
        net = DenseNet.create(3, 2, rng=np.random.default_rng(1))
        payload = net.to_payload()
        payload["layer_dims"] = [1, 2, 3]
        with pytest.raises(ValueError):
            DenseNet.from_payload(json.loads(json.dumps(payload)))
