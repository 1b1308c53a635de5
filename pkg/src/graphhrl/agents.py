"""Two-level goal-conditioned agent stack and its training loop.

A high-level double-Q learner proposes a subgoal from a fixed displacement
lattice every `subgoal_period` steps; a low-level double-Q learner picks
atomic actions conditioned on the current feature and the active subgoal.
Rewards for both levels come through the shaping module; the state graph
and codec are folded in online on the sampling cadence and retrain on the
change-counter trigger. Everything is driven by explicit generators so a
(config, seed) pair fully determines a run.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .codec import GraphCodec
from .graph import StateGraph
from .nn import AdamState, DenseNet, adam_step
from .rewards import ShapingParams, high_reward, low_reward

__all__ = [
    "HierConfig", "LowTransition", "HighTransition", "ReplayBuffer",
    "QLearner", "EpisodeStats", "HierarchicalTrainer",
    "select_action", "select_subgoal", "q_update", "subgoal_displacements",
]

SUBGOAL_DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass(frozen=True)
class HierConfig:
    """Every scalar hyperparameter of the hierarchy and the world model."""

    # high-level cadence and discounting
    subgoal_period: int = 10
    discount: float = 0.99
    # replay and batching
    replay_capacity: int = 20000
    batch_size: int = 128
    # Q-learner networks
    q_hidden_dim: int = 64
    q_hidden_layers: int = 2
    q_learning_rate: float = 1e-3
    target_sync_period: int = 100
    # epsilon-greedy exploration, linear decay across episodes
    explore_start: float = 1.0
    explore_end: float = 0.05
    explore_fraction: float = 0.5
    # subgoal displacement lattice
    subgoal_magnitudes: tuple = (1.0, 3.0)
    # state graph
    graph_capacity: int = 200
    match_radius: float = 0.1
    train_tolerance: float = 0.2
    eviction_policy: str = "oldest"
    sample_period: int | None = 1  # None disables graph sampling entirely
    # codec
    latent_dim: int = 16
    codec_hidden_dim: int = 128
    codec_hidden_layers: int = 3
    codec_learning_rate: float = 1e-4
    pair_sample_fraction: float = 1.0
    # intrinsic reward scales
    high_scale: float = 0.1
    low_scale: float = 0.1
    # run shape
    episodes: int = 500
    update_mode: str = "streaming"  # or "episode_end"

    def __post_init__(self):
        positive = (
            ("subgoal_period", self.subgoal_period),
            ("replay_capacity", self.replay_capacity),
            ("batch_size", self.batch_size),
            ("q_hidden_dim", self.q_hidden_dim),
            ("q_hidden_layers", self.q_hidden_layers),
            ("q_learning_rate", self.q_learning_rate),
            ("target_sync_period", self.target_sync_period),
            ("graph_capacity", self.graph_capacity),
            ("match_radius", self.match_radius),
            ("latent_dim", self.latent_dim),
            ("codec_hidden_dim", self.codec_hidden_dim),
            ("codec_learning_rate", self.codec_learning_rate),
            ("episodes", self.episodes),
        )
        for name, value in positive:
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must be in [0, 1)")
        if self.update_mode not in ("streaming", "episode_end"):
            raise ValueError(f"unknown update_mode {self.update_mode!r}")
        if self.sample_period is not None and self.sample_period < 1:
            raise ValueError("sample_period must be a positive integer or None")
        if self.high_scale < 0 or self.low_scale < 0:
            raise ValueError("intrinsic scales must be non-negative")

    def shaping(self):
        return ShapingParams(high_scale=self.high_scale, low_scale=self.low_scale)

    def epsilon(self, episode):
        """Exploration rate for the given episode index."""
        decay_span = max(1.0, self.explore_fraction * self.episodes)
        frac = min(1.0, episode / decay_span)
        return self.explore_start + frac * (self.explore_end - self.explore_start)


def subgoal_displacements(magnitudes=(1.0, 3.0)):
    """Subgoal lattice: stay, then 8 directions at each magnitude."""
    rows = [np.zeros(2)]
    for mag in magnitudes:
        for direction in SUBGOAL_DIRECTIONS:
            rows.append(float(mag) * np.array(direction, dtype=np.float64))
    return rows


@dataclass
class LowTransition:
    phi_s: np.ndarray
    subgoal: np.ndarray
    action: int
    reward: float
    phi_next: np.ndarray
    subgoal_next: np.ndarray
    done: bool
    x: np.ndarray = field(init=False, repr=False)
    x_next: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # learner inputs are precomputed: transitions are sampled far more
        # often than they are created
        self.x = np.concatenate((self.phi_s, self.subgoal))
        self.x_next = np.concatenate((self.phi_next, self.subgoal_next))


@dataclass(frozen=True)
class _PendingLow:
    """Low transition awaiting its successor subgoal."""

    phi_s: np.ndarray
    subgoal: np.ndarray
    action: int
    reward: float
    phi_next: np.ndarray
    done: bool

    def finish(self, subgoal_next):
        return LowTransition(self.phi_s, self.subgoal, self.action, self.reward,
                             self.phi_next, subgoal_next, self.done)


@dataclass
class HighTransition:
    phi_s: np.ndarray
    subgoal_index: int
    subgoal: np.ndarray
    reward: float  # discounted sum of per-step high-level rewards in the window
    phi_end: np.ndarray
    done: bool

    @property
    def action(self):
        return self.subgoal_index

    @property
    def x(self):
        return self.phi_s

    @property
    def x_next(self):
        return self.phi_end


class ReplayBuffer:
    """Fixed-capacity ring with uniform sampling; eviction is strict FIFO."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._items = []
        self._cursor = 0

    def __len__(self):
        return len(self._items)

    def push(self, item):
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, n, rng):
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]

    def items(self):
        return list(self._items)


class QLearner:
    """Double-Q regression learner with a periodically synced target net."""

    def __init__(self, in_dim, n_actions, *, hidden_dim=64, hidden_layers=2,
                 learning_rate=1e-3, target_sync_period=100, output_scale=0.01,
                 rng=None):
        self.online = DenseNet.create(in_dim, n_actions, hidden_dim=hidden_dim,
                                      hidden_layers=hidden_layers, rng=rng)
        # a near-zero head keeps initial Q at the reward scale instead of
        # the He-init scale, which otherwise costs thousands of updates
        self.online.weights[-1] *= float(output_scale)
        self.target = self.online.copy()
        self.adam = AdamState(self.online, learning_rate=learning_rate)
        self.target_sync_period = int(target_sync_period)
        self.n_actions = int(n_actions)
        self.updates = 0

    def q_values(self, x):
        return self.online.forward(x)

    def greedy(self, x):
        """Argmax action; ties resolve to the lowest index."""
        return int(np.argmax(self.online.forward(x)))

    def to_payload(self):
        return {
            "online": self.online.to_payload(),
            "target": self.target.to_payload(),
            "updates": self.updates,
            "n_actions": self.n_actions,
            "target_sync_period": self.target_sync_period,
        }

    @classmethod
    def from_payload(cls, payload, *, learning_rate=1e-3):
        online = DenseNet.from_payload(payload["online"])
        learner = cls.__new__(cls)
        learner.online = online
        learner.target = DenseNet.from_payload(payload["target"])
        learner.adam = AdamState(online, learning_rate=learning_rate)
        learner.target_sync_period = int(payload["target_sync_period"])
        learner.n_actions = int(payload["n_actions"])
        learner.updates = int(payload["updates"])
        return learner


def select_action(low, phi, subgoal, epsilon, rng):
    """Epsilon-greedy atomic action on the concatenated (feature, subgoal)."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(low.n_actions))
    return low.greedy(np.concatenate((phi, subgoal)))


def select_subgoal(high, phi, bounds, epsilon, rng, displacements):
    """Epsilon-greedy displacement pick, returned as a clipped absolute subgoal.

    Returns (lattice index, subgoal). Greedy mode is the deterministic
    argmax with lowest-index tie-break; epsilon mode draws uniformly over
    the lattice.
    """
    if epsilon > 0.0 and rng.random() < epsilon:
        idx = int(rng.integers(len(displacements)))
    else:
        idx = high.greedy(phi)
    low_bounds = np.array([b[0] for b in bounds])
    high_bounds = np.array([b[1] for b in bounds])
    subgoal = np.clip(phi + displacements[idx], low_bounds, high_bounds)
    return idx, subgoal


def q_update(learner, buffer, batch_size, discount, rng):
    """One double-Q Adam step on a uniform batch; None while underfilled.

    Target: y = r + discount * (1 - done) * Q_target(x', argmax_a Q_online(x', a)).
    Returns the mean squared TD error over the batch before the step.
    """
    if len(buffer) < batch_size:
        return None
    batch = buffer.sample(batch_size, rng)
    X = np.stack([t.x for t in batch])
    X_next = np.stack([t.x_next for t in batch])
    actions = np.array([t.action for t in batch])
    rewards = np.array([t.reward for t in batch])
    not_done = np.array([0.0 if t.done else 1.0 for t in batch])

    rows = np.arange(batch_size)
    best_next = np.argmax(learner.online.forward_batch(X_next), axis=1)
    q_next = learner.target.forward_batch(X_next)[rows, best_next]
    y = rewards + discount * not_done * q_next

    acts = learner.online.forward_cached(X)
    predictions = acts[-1]
    residual = np.zeros_like(predictions)
    residual[rows, actions] = predictions[rows, actions] - y
    loss = float(np.sum(residual * residual)) / batch_size
    grads = learner.online.backprop(acts, (2.0 / batch_size) * residual)
    adam_step(learner.online, grads, learner.adam)
    learner.updates += 1
    if learner.updates % learner.target_sync_period == 0:
        learner.target.copy_from(learner.online)
    return loss


@dataclass
class EpisodeStats:
    episode: int
    steps: int
    external_return: float
    success: bool
    graph_occupancy: int
    codec_phases: int
    last_codec_loss: float
    wall_ms: float
    trajectory_digest: str


class HierarchicalTrainer:
    """Owns one full agent stack and advances it one episode at a time.

    Not thread-safe; run one trainer per thread. Seed derivation splits
    independent streams for agent decisions, codec pair sampling, and the
    three network initializations, so disabling the world model (or zeroing
    the intrinsic scales) cannot perturb agent-side randomness.
    """

    def __init__(self, env, config, seed, *, world_model=True, record_wall_clock=True):
        if config.subgoal_period > env.spec.max_steps:
            raise ValueError("subgoal_period must not exceed the episode step cap")
        self.env = env
        self.config = config
        self.seed = int(seed)
        self.record_wall_clock = bool(record_wall_clock)
        streams = np.random.SeedSequence(self.seed).spawn(5)
        self.rng_agent = np.random.default_rng(streams[0])
        self.rng_codec = np.random.default_rng(streams[1])

        self.displacements = subgoal_displacements(config.subgoal_magnitudes)
        self.bounds = env.position_bounds()
        feat_dim = len(env.spec.start)
        self.high = QLearner(
            feat_dim, len(self.displacements), hidden_dim=config.q_hidden_dim,
            hidden_layers=config.q_hidden_layers, learning_rate=config.q_learning_rate,
            target_sync_period=config.target_sync_period,
            rng=np.random.default_rng(streams[2]))
        self.low = QLearner(
            2 * feat_dim, env.n_actions, hidden_dim=config.q_hidden_dim,
            hidden_layers=config.q_hidden_layers, learning_rate=config.q_learning_rate,
            target_sync_period=config.target_sync_period,
            rng=np.random.default_rng(streams[3]))
        self.high_buffer = ReplayBuffer(config.replay_capacity)
        self.low_buffer = ReplayBuffer(config.replay_capacity)

        self.world_model = bool(world_model) and config.sample_period is not None
        if self.world_model:
            self.graph = StateGraph(
                config.graph_capacity, feat_dim, config.match_radius,
                eviction_policy=config.eviction_policy,
                train_tolerance=config.train_tolerance)
            self.codec = GraphCodec.create(
                feat_dim, config.latent_dim, hidden_dim=config.codec_hidden_dim,
                hidden_layers=config.codec_hidden_layers,
                learning_rate=config.codec_learning_rate,
                pair_sample_fraction=config.pair_sample_fraction,
                rng=np.random.default_rng(streams[4]))
        else:
            self.graph = None
            self.codec = None

        # no codec means nothing to shape with: fall back to the baseline
        self.shaping = config.shaping() if self.world_model else ShapingParams(0.0, 0.0)
        self.episode_index = 0
        self.total_steps = 0
        self.last_codec_loss = float("nan")
        self._prev_sampled = None

    @property
    def _needs_codec(self):
        return self.codec is not None and (
            self.shaping.high_scale > 0 or self.shaping.low_scale > 0)

    def _observe(self, visit_index, phi):
        """Fold a visited feature into the graph on the sampling cadence.

        Returns True when a codec training phase fired, so reward-side
        embedding caches can be refreshed.
        """
        if self.graph is None or visit_index % self.config.sample_period != 0:
            return False
        self.graph.observe_transition(self._prev_sampled, phi, self.total_steps)
        self._prev_sampled = phi
        if self.graph.consume_training_trigger():
            self.last_codec_loss = self.codec.train_phase(self.graph, self.rng_codec)
            return True
        return False

    def _update_policies(self):
        q_update(self.low, self.low_buffer, self.config.batch_size,
                 self.config.discount, self.rng_agent)
        q_update(self.high, self.high_buffer, self.config.batch_size,
                 self.config.discount, self.rng_agent)

    def run_episode(self, *, explore=True, learn=True):
        """Play one episode, learning online; returns its statistics."""
        started = time.perf_counter() if self.record_wall_clock else 0.0
        config = self.config
        epsilon = config.epsilon(self.episode_index) if explore else 0.0
        digest = hashlib.sha256()

        state, phi = self.env.reset(self.rng_agent)
        self._prev_sampled = None
        self._observe(0, phi)

        needs_codec = self._needs_codec
        e_phi = self.codec.encode(phi) if needs_codec else None
        e_subgoal = None
        subgoal = None
        subgoal_index = None
        window_start_phi = None
        window_return = 0.0
        window_len = 0
        pending = None
        external_return = 0.0
        t = 0

        while True:
            if t % config.subgoal_period == 0:
                subgoal_index, subgoal = select_subgoal(
                    self.high, phi, self.bounds, epsilon, self.rng_agent,
                    self.displacements)
                window_start_phi = phi
                window_return = 0.0
                window_len = 0
                if needs_codec:
                    e_subgoal = self.codec.encode(subgoal)
            if pending is not None:
                # completed late: the successor subgoal is only known here
                self.low_buffer.push(pending.finish(subgoal))
                pending = None

            action = select_action(self.low, phi, subgoal, epsilon, self.rng_agent)
            state, phi_next, r_ext, done, success = self.env.step(state, action)
            digest.update(np.int64(action).tobytes())
            digest.update(phi_next.tobytes())
            external_return += r_ext

            e_phi_next = self.codec.encode(phi_next) if needs_codec else None
            r_h = high_reward(r_ext, phi, subgoal, self.codec, self.shaping,
                              phi_embedding=e_phi, subgoal_embedding=e_subgoal)
            r_l = low_reward(phi_next, subgoal, self.codec, self.shaping,
                             phi_embedding=e_phi_next, subgoal_embedding=e_subgoal)

            pending = _PendingLow(phi, subgoal, action, r_l, phi_next, done)
            window_return += (config.discount ** window_len) * r_h
            window_len += 1
            if window_len == config.subgoal_period or done:
                self.high_buffer.push(HighTransition(
                    window_start_phi, subgoal_index, subgoal, window_return,
                    phi_next, done))

            self.total_steps += 1
            codec_trained = self._observe(t + 1, phi_next)
            if codec_trained and needs_codec:
                # rewards must use parameters frozen at each step's start
                e_phi_next = self.codec.encode(phi_next)
                e_subgoal = self.codec.encode(subgoal)

            if learn and config.update_mode == "streaming":
                self._update_policies()

            e_phi = e_phi_next
            phi = phi_next
            t += 1
            if done:
                self.low_buffer.push(pending.finish(subgoal))
                pending = None
                break

        if learn and config.update_mode == "episode_end":
            for _ in range(t):
                self._update_policies()

        stats = EpisodeStats(
            episode=self.episode_index,
            steps=t,
            external_return=external_return,
            success=bool(state.success),
            graph_occupancy=self.graph.occupancy if self.graph is not None else 0,
            codec_phases=self.codec.trained_phases if self.codec is not None else 0,
            last_codec_loss=self.last_codec_loss,
            wall_ms=(time.perf_counter() - started) * 1e3 if self.record_wall_clock else 0.0,
            trajectory_digest=digest.hexdigest(),
        )
        self.episode_index += 1
        return stats

    def evaluate(self, episodes):
        """Greedy rollouts with no learning and no RNG consumption.

        Returns (success rate, mean external return).
        """
        successes = 0
        returns = 0.0
        for _ in range(episodes):
            state, phi = self.env.reset(None)
            subgoal = None
            t = 0
            while True:
                if t % self.config.subgoal_period == 0:
                    _, subgoal = select_subgoal(
                        self.high, phi, self.bounds, 0.0, None, self.displacements)
                action = select_action(self.low, phi, subgoal, 0.0, None)
                state, phi, r_ext, done, success = self.env.step(state, action)
                returns += r_ext
                t += 1
                if done:
                    successes += int(success)
                    break
        return successes / episodes, returns / episodes
