"""Dense feed-forward numerics shared by the graph codec and the Q-learners.

Everything runs in float64 numpy for reproducible desk-scale checks.
Networks are stacks of affine layers with ReLU on every hidden layer and an
identity output layer. Gradients are exact backprop of weighted
sum-of-squares objectives; the optimizer is bias-corrected Adam.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["DenseNet", "AdamState", "backward", "adam_step"]


class DenseNet:
    """Affine/ReLU stack: ReLU on hidden layers, linear output layer.

    Weight matrices are stored as (out, in); biases as (out,). Adjacent
    layer dimensions must chain exactly.
    """

    def __init__(self, weights, biases):
        if not weights or len(weights) != len(biases):
            raise ValueError("need one bias vector per weight matrix")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(weights, biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: bad shapes {w.shape} / {b.shape}")
            if i > 0 and ws[-1].shape[0] != w.shape[1]:
                raise ValueError(
                    f"layer {i}: input dim {w.shape[1]} does not chain with "
                    f"previous output dim {ws[-1].shape[0]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")
            ws.append(w)
            bs.append(b)
        self.weights = ws
        self.biases = bs

    @classmethod
    def create(cls, in_dim, out_dim, hidden_dim=128, hidden_layers=3, rng=None):
        """He-style uniform fan-in initialization, zero biases.

        Defaults give the four-layer, 128-wide architecture used by the
        graph codec; Q-learners pass smaller sizes.
        """
        rng = np.random.default_rng(rng)
        dims = [int(in_dim)] + [int(hidden_dim)] * int(hidden_layers) + [int(out_dim)]
        if min(dims) < 1:
            raise ValueError(f"all layer dims must be positive, got {dims}")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def layer_dims(self):
        return [self.in_dim] + [w.shape[0] for w in self.weights]

    def forward(self, x):
        """Map a single input vector to the output vector. Pure."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.in_dim,):
            raise ValueError(f"expected input of shape ({self.in_dim},), got {x.shape}")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = w @ h + b
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h

    def forward_batch(self, X):
        """Row-wise forward pass for a (n, in_dim) batch. Pure."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ValueError(f"expected batch of shape (n, {self.in_dim}), got {X.shape}")
        H = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            H = H @ w.T + b
            if i < last:
                np.maximum(H, 0.0, out=H)
        return H

    def forward_cached(self, X):
        """Forward pass keeping every layer activation, for backprop.

        Returns [a0, a1, ..., aL] where a0 is the input batch and aL the
        output batch; hidden activations are post-ReLU.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ValueError(f"expected batch of shape (n, {self.in_dim}), got {X.shape}")
        acts = [X]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            H = acts[-1] @ w.T + b
            if i < last:
                np.maximum(H, 0.0, out=H)
            acts.append(H)
        return acts

    def backprop(self, activations, output_grad):
        """Propagate dL/d(output) back to parameter gradients.

        `activations` must come from forward_cached on this network with
        unchanged parameters. Returns [(dW, db), ...] per layer.
        """
        delta = np.asarray(output_grad, dtype=np.float64)
        grads = [None] * len(self.weights)
        for layer in range(len(self.weights) - 1, -1, -1):
            a_in = activations[layer]
            grads[layer] = (delta.T @ a_in, delta.sum(axis=0))
            if layer > 0:
                # hidden activations are post-ReLU: a > 0 marks active units
                delta = (delta @ self.weights[layer]) * (activations[layer] > 0.0)
        return grads

    def copy(self):
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def copy_from(self, other):
        """Overwrite parameters in place from a same-shaped network."""
        for w, b, ow, ob in zip(self.weights, self.biases, other.weights, other.biases):
            if w.shape != ow.shape or b.shape != ob.shape:
                raise ValueError("shape mismatch between networks")
            w[...] = ow
            b[...] = ob

    def to_payload(self):
        """JSON-ready dict; floats survive a round trip bit-exactly."""
        return {
            "layer_dims": self.layer_dims,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_payload(cls, payload):
        net = cls(payload["weights"], payload["biases"])
        if net.layer_dims != list(payload["layer_dims"]):
            raise ValueError("layer_dims metadata disagrees with stored parameters")
        return net

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_payload()))

    @classmethod
    def load(cls, path):
        return cls.from_payload(json.loads(Path(path).read_text()))


def backward(net, batch):
    """Gradients and value of a weighted sum-of-squares objective.

    `batch` is a sequence of (x, target, weight) triples; the objective is
    sum_i weight_i * ||net(x_i) - target_i||^2. Returns (grads, loss) with
    grads shaped like the parameters.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    X = np.stack([np.asarray(x, dtype=np.float64) for x, _, _ in batch])
    T = np.stack([np.asarray(t, dtype=np.float64) for _, t, _ in batch])
    w = np.array([float(s) for _, _, s in batch])
    return backward_arrays(net, X, T, w)


def backward_arrays(net, X, T, weights):
    """Array-native variant of backward for hot paths."""
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if T.shape != (X.shape[0], net.out_dim):
        raise ValueError(f"targets must be shaped ({X.shape[0]}, {net.out_dim}), got {T.shape}")
    acts = net.forward_cached(X)
    resid = acts[-1] - T
    loss = float(np.sum(weights * np.sum(resid * resid, axis=1)))
    grads = net.backprop(acts, 2.0 * weights[:, None] * resid)
    return grads, loss


class AdamState:
    """First/second moment accumulators plus the step counter for Adam."""

    def __init__(self, net, learning_rate=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step_count = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]


def adam_step(net, grads, state):
    """One bias-corrected Adam update, in place on net and state."""
    if len(grads) != len(net.weights):
        raise ValueError("gradient layer count does not match network")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    lr, eps = state.learning_rate, state.epsilon
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for layer, (dw, db) in enumerate(grads):
        for param, grad, m, v in (
            (net.weights[layer], np.asarray(dw), state.m[layer][0], state.v[layer][0]),
            (net.biases[layer], np.asarray(db), state.m[layer][1], state.v[layer][1]),
        ):
            if grad.shape != param.shape:
                raise ValueError(
                    f"layer {layer}: gradient shape {grad.shape} != parameter shape {param.shape}"
                )
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            param -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
