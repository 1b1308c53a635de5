"""Fixed-capacity undirected state graph built online from visited states.

Visited state features either match an existing node (within a configurable
radius under a weighted Euclidean distance) or claim a slot, evicting the
oldest or most weakly connected node once the graph is full. Edge weights
count observed transitions between distinct nodes. A weighted change
counter accumulates mutation mass (node events weigh capacity-1, edge
events 1) and gates codec retraining once the graph is full.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["GraphDelta", "StateGraph"]

EVICTION_POLICIES = ("oldest", "weakest")


@dataclass(frozen=True)
class GraphDelta:
    """Audit record for one graph mutation event.

    kind: one of none | node_inserted | node_relabeled | node_replaced |
    edge_updated. `slots` holds the affected slot indices ((u, v) for edge
    events). `weight` is the edge weight after an edge update, else None.
    """

    kind: str
    slots: tuple
    weight: int | None = None

    def change_weight(self, capacity):
        """Contribution of this event to the change counter."""
        if self.kind in ("node_inserted", "node_replaced"):
            return capacity - 1
        if self.kind == "edge_updated":
            return 1
        return 0


class StateGraph:
    """Node store, symmetric integer adjacency, and the change counter.

    Single-writer: all mutations must come from one control thread.
    Read-only queries are safe concurrently when no writer is active.
    """

    def __init__(self, capacity, dim, match_radius, *, distance_weights=None,
                 eviction_policy="oldest", train_tolerance=0.2):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if dim < 1:
            raise ValueError("feature dimension must be positive")
        if match_radius <= 0:
            raise ValueError("match_radius must be positive")
        if eviction_policy not in EVICTION_POLICIES:
            raise ValueError(f"eviction_policy must be one of {EVICTION_POLICIES}")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.match_radius = float(match_radius)
        if distance_weights is None:
            distance_weights = np.ones(self.dim)
        self.distance_weights = np.asarray(distance_weights, dtype=np.float64).copy()
        if self.distance_weights.shape != (self.dim,) or (self.distance_weights < 0).any():
            raise ValueError("distance_weights must be non-negative with one entry per dimension")
        self.eviction_policy = eviction_policy
        self.train_tolerance = float(train_tolerance)
        self.features = np.zeros((self.capacity, self.dim))
        self.filled = np.zeros(self.capacity, dtype=bool)
        self.inserted_at = np.zeros(self.capacity, dtype=np.int64)
        self.adjacency = np.zeros((self.capacity, self.capacity), dtype=np.int64)
        self.change_counter = 0

    @property
    def occupancy(self):
        return int(self.filled.sum())

    @property
    def is_full(self):
        return self.occupancy == self.capacity

    def filled_slots(self):
        """Indices of occupied slots, ascending."""
        return np.flatnonzero(self.filled)

    def _check_dim(self, phi):
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (self.dim,):
            raise ValueError(f"expected feature of shape ({self.dim},), got {phi.shape}")
        return phi

    def _distances(self, phi, slots):
        diff = self.features[slots] - phi
        return np.sqrt((self.distance_weights * diff * diff).sum(axis=1))

    def nearest_node(self, phi):
        """Closest filled slot under the weighted distance, or None.

        Unconstrained minimum, intended for diagnostics; ties resolve to
        the lowest slot index. Returns (slot, distance).
        """
        phi = self._check_dim(phi)
        slots = self.filled_slots()
        if slots.size == 0:
            return None
        dists = self._distances(phi, slots)
        best = int(np.argmin(dists))  # argmin returns the first (lowest-slot) minimum
        return int(slots[best]), float(dists[best])

    def match_node(self, phi):
        """Nearest filled slot within match_radius, or None.

        Boundary equality counts as a match, so a feature exactly at the
        radius never spawns a new node.
        """
        hit = self.nearest_node(phi)
        if hit is None or hit[1] > self.match_radius:
            return None
        return hit

    def _eviction_slot(self):
        slots = self.filled_slots()
        if self.eviction_policy == "oldest":
            scores = self.inserted_at[slots]
        else:
            scores = self.adjacency[slots].sum(axis=1)
        return int(slots[int(np.argmin(scores))])  # first minimum = lowest slot

    def _clear_slot(self, slot):
        self.filled[slot] = False
        self.features[slot] = 0.0
        self.inserted_at[slot] = 0
        self.adjacency[slot, :] = 0
        self.adjacency[:, slot] = 0

    def _insert(self, slot, phi, global_step):
        self.features[slot] = phi
        self.filled[slot] = True
        self.inserted_at[slot] = int(global_step)

    def observe_transition(self, phi_prev, phi_curr, global_step):
        """Fold one sampled transition into the graph.

        phi_prev must be None exactly at episode starts (more precisely:
        whenever there is no previously sampled feature). Resolves the
        current feature to a node (match, insert, or replace), then bumps
        the symmetric edge weight between the previous feature's node and
        the current one when both resolve to distinct nodes. Returns the
        list of GraphDelta events, which also drive the change counter.
        """
        phi_curr = self._check_dim(phi_curr)
        deltas = []
        hit = self.match_node(phi_curr)
        if hit is not None:
            # Identity relabel: the stored feature is kept, preserving the
            # pairwise separation invariant.
            curr_slot = hit[0]
            deltas.append(GraphDelta("node_relabeled", (curr_slot,)))
        elif not self.is_full:
            curr_slot = int(np.flatnonzero(~self.filled)[0])
            self._insert(curr_slot, phi_curr, global_step)
            deltas.append(GraphDelta("node_inserted", (curr_slot,)))
        else:
            curr_slot = self._eviction_slot()
            self._clear_slot(curr_slot)
            self._insert(curr_slot, phi_curr, global_step)
            deltas.append(GraphDelta("node_replaced", (curr_slot,)))

        if phi_prev is not None:
            phi_prev = self._check_dim(phi_prev)
            prev_hit = self.match_node(phi_prev)
            # prev resolves by matching; it can be absent if its node was
            # just evicted, in which case no edge is recorded.
            if prev_hit is not None and prev_hit[0] != curr_slot:
                u, v = sorted((prev_hit[0], curr_slot))
                self.adjacency[u, v] += 1
                self.adjacency[v, u] = self.adjacency[u, v]
                deltas.append(GraphDelta("edge_updated", (u, v), int(self.adjacency[u, v])))

        for delta in deltas:
            self.change_counter += delta.change_weight(self.capacity)
        return deltas

    def normalized_adjacency(self):
        """Adjacency divided by its maximum entry; all zeros stays zero."""
        peak = int(self.adjacency.max())
        if peak == 0:
            return np.zeros_like(self.adjacency, dtype=np.float64)
        return self.adjacency.astype(np.float64) / float(peak)

    def train_threshold(self):
        return self.train_tolerance * (self.capacity**2 - self.capacity)

    def consume_training_trigger(self):
        """True (and counter reset) iff the graph is full and the counter
        has reached tolerance * (capacity^2 - capacity)."""
        if not self.is_full:
            return False
        threshold = self.train_threshold()
        # Slack absorbs float noise in tolerance * (N^2 - N); the counter is
        # integral, so anything within 1e-6 of the threshold has reached it.
        if self.change_counter >= threshold - 1e-6:
            self.change_counter = 0
            return True
        return False

    def check_invariants(self):
        """Raise AssertionError if any structural invariant is violated."""
        adj = self.adjacency
        assert (adj == adj.T).all(), "adjacency must be symmetric"
        assert (np.diag(adj) == 0).all(), "adjacency diagonal must be zero"
        assert (adj >= 0).all(), "edge weights must be non-negative"
        empty = np.flatnonzero(~self.filled)
        assert (adj[empty, :] == 0).all() and (adj[:, empty] == 0).all(), \
            "empty slots must have no edges"
        slots = self.filled_slots()
        for i, u in enumerate(slots):
            if i + 1 < slots.size:
                d = self._distances(self.features[u], slots[i + 1:])
                assert (d > self.match_radius).all(), \
                    f"stored features closer than the match radius near slot {u}"
        assert self.occupancy <= self.capacity

    def to_payload(self):
        """JSON-ready dump: nodes plus sparse upper-triangle edges."""
        nodes = [
            {"slot": int(s), "feature": self.features[s].tolist(),
             "inserted_at": int(self.inserted_at[s])}
            for s in self.filled_slots()
        ]
        iu, iv = np.nonzero(np.triu(self.adjacency, 1))
        edges = [
            {"u": int(u), "v": int(v), "weight": int(self.adjacency[u, v])}
            for u, v in zip(iu, iv)
        ]
        return {
            "capacity": self.capacity,
            "distance_weights": self.distance_weights.tolist(),
            "nodes": nodes,
            "edges": edges,
        }

    @classmethod
    def from_payload(cls, payload, *, match_radius, eviction_policy="oldest",
                     train_tolerance=0.2):
        """Rebuild a graph from to_payload output.

        The dump format intentionally excludes run configuration (radius,
        policy, tolerance) and the change counter, so those are supplied
        here; the counter restarts at zero.
        """
        weights = payload["distance_weights"]
        graph = cls(payload["capacity"], len(weights), match_radius,
                    distance_weights=weights, eviction_policy=eviction_policy,
                    train_tolerance=train_tolerance)
        for node in payload["nodes"]:
            slot = int(node["slot"])
            if graph.filled[slot]:
                raise ValueError(f"duplicate slot {slot} in payload")
            graph._insert(slot, graph._check_dim(node["feature"]), node["inserted_at"])
        for edge in payload["edges"]:
            u, v, w = int(edge["u"]), int(edge["v"]), int(edge["weight"])
            if u == v or not (graph.filled[u] and graph.filled[v]):
                raise ValueError(f"edge ({u}, {v}) touches an invalid slot")
            graph.adjacency[u, v] = w
            graph.adjacency[v, u] = w
        return graph

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_payload()))

    @classmethod
    def load(cls, path, **kwargs):
        return cls.from_payload(json.loads(Path(path).read_text()), **kwargs)
