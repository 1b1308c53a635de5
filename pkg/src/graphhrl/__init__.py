"""Hierarchical RL with graph-derived subgoal representations, desk scale."""

from .agents import (EpisodeStats, HierarchicalTrainer, HierConfig,
                     HighTransition, LowTransition, QLearner, ReplayBuffer,
                     q_update, select_action, select_subgoal,
                     subgoal_displacements)
from .codec import GraphCodec, decode, reconstruction_loss
from .envs import EnvState, GridMaze, MazeSpec, PointMaze, make_env
from .graph import GraphDelta, StateGraph
from .harness import (ARM_MASKS, ConfigError, RunConfig, dump_embeddings,
                      dump_graph, evaluate_run, pca_components, run)
from .nn import AdamState, DenseNet, adam_step, backward
from .rewards import ShapingParams, high_reward, low_reward

__all__ = [
    "AdamState", "ARM_MASKS", "ConfigError", "DenseNet", "EnvState",
    "EpisodeStats", "GraphCodec", "GraphDelta", "GridMaze",
    "HierConfig", "HierarchicalTrainer", "HighTransition", "LowTransition",
    "MazeSpec", "PointMaze", "QLearner", "ReplayBuffer", "RunConfig",
    "ShapingParams", "StateGraph", "adam_step", "backward", "decode",
    "dump_embeddings", "dump_graph", "evaluate_run", "high_reward",
    "low_reward", "make_env", "pca_components", "q_update",
    "reconstruction_loss", "run", "select_action", "select_subgoal",
    "subgoal_displacements",
]

__version__ = "0.1.0"
