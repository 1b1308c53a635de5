"""Graph encoder-decoder producing subgoal representations.

The encoder is a dense feed-forward network mapping state features to
latent subgoal vectors; the decoder is the parameterless dot product. The
pair of them is trained so that decoded pair scores reconstruct the
normalized adjacency of the state graph, one optimizer step per training
phase, warm-starting from the previous phase's parameters.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .nn import AdamState, DenseNet, adam_step

__all__ = ["GraphCodec", "decode", "reconstruction_loss"]


def decode(g_u, g_v):
    """Pair score of two subgoal representations: their inner product."""
    g_u = np.asarray(g_u, dtype=np.float64)
    g_v = np.asarray(g_v, dtype=np.float64)
    if g_u.shape != g_v.shape or g_u.ndim != 1:
        raise ValueError(f"representations must share one dimension, got {g_u.shape} / {g_v.shape}")
    return float(np.dot(g_u, g_v))


def _pair_loss(embeddings, targets, iu, iv):
    # Accumulated pairwise in ascending order with per-pair np.dot so the
    # value is reproducible against a like-structured reference loop.
    loss = 0.0
    residuals = np.empty(len(iu))
    for row, (u, v) in enumerate(zip(iu, iv)):
        r = float(np.dot(embeddings[u], embeddings[v])) - float(targets[row])
        residuals[row] = r
        loss += r * r
    return loss, residuals


class GraphCodec:
    """Encoder network, its optimizer state, and the phase counter."""

    def __init__(self, encoder, *, learning_rate=1e-4, pair_sample_fraction=1.0,
                 trained_phases=0):
        if not 0.0 < pair_sample_fraction <= 1.0:
            raise ValueError("pair_sample_fraction must be in (0, 1]")
        self.encoder = encoder
        self.adam = AdamState(encoder, learning_rate=learning_rate)
        self.pair_sample_fraction = float(pair_sample_fraction)
        self.trained_phases = int(trained_phases)
        self.last_pair_count = 0

    @classmethod
    def create(cls, state_dim, latent_dim=16, *, hidden_dim=128, hidden_layers=3,
               learning_rate=1e-4, pair_sample_fraction=1.0, output_scale=0.01,
               rng=None):
        encoder = DenseNet.create(state_dim, latent_dim, hidden_dim=hidden_dim,
                                  hidden_layers=hidden_layers, rng=rng)
        # damp the head so untrained pair scores sit near zero instead of
        # the He-init scale; reward shaping reads the codec before the
        # first training phase
        encoder.weights[-1] *= float(output_scale)
        return cls(encoder, learning_rate=learning_rate,
                   pair_sample_fraction=pair_sample_fraction)

    @property
    def state_dim(self):
        return self.encoder.in_dim

    @property
    def latent_dim(self):
        return self.encoder.out_dim

    def encode(self, phi):
        """Subgoal representation of one state feature. Pure."""
        return self.encoder.forward(phi)

    def encode_batch(self, phis):
        return self.encoder.forward_batch(phis)

    def _graph_batch(self, graph):
        slots = graph.filled_slots()
        features = graph.features[slots]
        targets = graph.normalized_adjacency()[np.ix_(slots, slots)]
        return slots, features, targets

    def reconstruction_loss(self, graph):
        """Sum of squared pair-score errors against normalized adjacency.

        Runs over unordered filled pairs u < v; the diagonal is excluded.
        Requires at least two filled nodes.
        """
        slots, features, targets = self._graph_batch(graph)
        n = len(slots)
        if n < 2:
            raise ValueError("reconstruction loss needs at least two filled nodes")
        iu, iv = np.triu_indices(n, 1)
        embeddings = self.encode_batch(features)
        loss, _ = _pair_loss(embeddings, targets[iu, iv], iu, iv)
        return loss

    def _loss_and_grads(self, features, pair_targets, iu, iv):
        acts = self.encoder.forward_cached(features)
        embeddings = acts[-1]
        loss, residuals = _pair_loss(embeddings, pair_targets, iu, iv)
        d_embeddings = np.zeros_like(embeddings)
        scaled = 2.0 * residuals[:, None]
        np.add.at(d_embeddings, iu, scaled * embeddings[iv])
        np.add.at(d_embeddings, iv, scaled * embeddings[iu])
        return loss, self.encoder.backprop(acts, d_embeddings)

    def objective_gradients(self, graph):
        """Exact encoder gradients of the full pair objective.

        Returns (loss, grads); the loss equals reconstruction_loss.
        """
        slots, features, targets = self._graph_batch(graph)
        n = len(slots)
        if n < 2:
            raise ValueError("objective needs at least two filled nodes")
        iu, iv = np.triu_indices(n, 1)
        return self._loss_and_grads(features, targets[iu, iv], iu, iv)

    def train_phase(self, graph, rng=None):
        """One optimizer step on the pair-reconstruction objective.

        Requires a full graph. With pair_sample_fraction < 1, the step uses
        ceil(fraction * P) unordered pairs drawn without replacement;
        otherwise every pair, in ascending order. Returns the sampled
        objective value before the step.
        """
        if not graph.is_full:
            raise ValueError("codec training requires a full graph")
        slots, features, targets = self._graph_batch(graph)
        n = len(slots)
        iu, iv = np.triu_indices(n, 1)
        if self.pair_sample_fraction < 1.0:
            total = len(iu)
            take = math.ceil(self.pair_sample_fraction * total)
            rng = np.random.default_rng(rng)
            chosen = rng.choice(total, size=take, replace=False)
            iu, iv = iu[chosen], iv[chosen]
        self.last_pair_count = len(iu)

        loss, grads = self._loss_and_grads(features, targets[iu, iv], iu, iv)
        adam_step(self.encoder, grads, self.adam)
        self.trained_phases += 1
        return loss

    def embedding_rows(self, graph):
        """(slot, feature components, latent components) per filled slot."""
        slots, features, _ = self._graph_batch(graph)
        embeddings = self.encode_batch(features) if len(slots) else np.zeros((0, self.latent_dim))
        return [
            (int(slot), features[i].tolist(), embeddings[i].tolist())
            for i, slot in enumerate(slots)
        ]

    def to_payload(self):
        return {
            "encoder": self.encoder.to_payload(),
            "latent_dim": self.latent_dim,
            "trained_phases": self.trained_phases,
        }

    @classmethod
    def from_payload(cls, payload, *, learning_rate=1e-4, pair_sample_fraction=1.0):
        codec = cls(DenseNet.from_payload(payload["encoder"]),
                    learning_rate=learning_rate,
                    pair_sample_fraction=pair_sample_fraction,
                    trained_phases=payload["trained_phases"])
        if codec.latent_dim != int(payload["latent_dim"]):
            raise ValueError("latent_dim metadata disagrees with encoder output size")
        return codec

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_payload()))

    @classmethod
    def load(cls, path, **kwargs):
        return cls.from_payload(json.loads(Path(path).read_text()), **kwargs)


def reconstruction_loss(codec, graph):
    """Module-level alias for GraphCodec.reconstruction_loss."""
    return codec.reconstruction_loss(graph)
