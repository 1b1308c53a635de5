"""Shaped rewards for the two agent levels.

High level: external reward plus a scaled pair score between the encoded
current state and the encoded subgoal. Low level: negative squared
Euclidean distance to the subgoal in feature space plus the analogous
scaled pair score. Both collapse to the unshaped baseline when their
scale is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import decode

__all__ = ["ShapingParams", "high_reward", "low_reward"]


@dataclass(frozen=True)
class ShapingParams:
    """Intrinsic-term scales for the high and low level."""

    high_scale: float = 0.1
    low_scale: float = 0.1

    def __post_init__(self):
        if self.high_scale < 0 or self.low_scale < 0:
            raise ValueError("shaping scales must be non-negative")


def high_reward(r_ext, phi_s, subgoal, codec, params, *,
                phi_embedding=None, subgoal_embedding=None):
    """External reward plus the scaled state/subgoal pair score.

    Embeddings may be passed precomputed (they are pure functions of their
    inputs) to avoid re-encoding in hot loops.
    """
    if params.high_scale == 0.0:
        return float(r_ext)
    if phi_embedding is None:
        phi_embedding = codec.encode(phi_s)
    if subgoal_embedding is None:
        subgoal_embedding = codec.encode(subgoal)
    return float(r_ext) + params.high_scale * decode(phi_embedding, subgoal_embedding)


def low_reward(phi_next, subgoal, codec, params, *,
               phi_embedding=None, subgoal_embedding=None):
    """Negative squared distance to the subgoal plus the scaled pair score."""
    diff = np.asarray(phi_next, dtype=np.float64) - np.asarray(subgoal, dtype=np.float64)
    base = -float(np.dot(diff, diff))
    if params.low_scale == 0.0:
        return base
    if phi_embedding is None:
        phi_embedding = codec.encode(phi_next)
    if subgoal_embedding is None:
        subgoal_embedding = codec.encode(subgoal)
    return base + params.low_scale * decode(phi_embedding, subgoal_embedding)
