"""Experiment runner: seeded multi-run execution, exports, and PCA.

A run config couples a maze, the hierarchy hyperparameters, a list of
ablation arms, and a seed list. Each (arm, seed) pair trains a fresh agent
stack and leaves a self-contained artifact directory: a metrics CSV, the
final state graph, the codec checkpoint, and both Q-learner checkpoints.
A summary JSON aggregates trailing-window success per arm across seeds.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import (EpisodeStats, HierConfig, HierarchicalTrainer, QLearner,
                     select_action, select_subgoal, subgoal_displacements)
from .codec import GraphCodec
from .envs import MazeSpec, make_env
from .graph import StateGraph

__all__ = [
    "ConfigError", "RunConfig", "ARM_MASKS", "METRICS_COLUMNS",
    "arm_config", "run", "trailing_success_rate",
    "write_metrics_csv", "load_metrics_csv",
    "dump_graph", "dump_embeddings", "evaluate_run", "pca_components",
]

# arm -> (apply high-level intrinsic, apply low-level intrinsic)
ARM_MASKS = {
    "full": (True, True),
    "high_only": (True, False),
    "low_only": (False, True),
    "vanilla": (False, False),
}

METRICS_COLUMNS = ("episode", "steps", "external_return", "success",
                   "graph_occupancy", "codec_phases", "last_codec_loss",
                   "wall_clock_ms")


class ConfigError(Exception):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    maze: MazeSpec
    hier: HierConfig
    out_dir: str
    env_kind: str = "grid"
    point_step_length: float = 0.5
    arms: tuple = ("full",)
    seeds: tuple = (0,)
    trailing_window: int = 100
    deterministic_timing: bool = False

    def __post_init__(self):
        for arm in self.arms:
            if arm not in ARM_MASKS:
                raise ConfigError(f"unknown arm {arm!r}; expected one of {sorted(ARM_MASKS)}")
        if not self.arms or not self.seeds:
            raise ConfigError("need at least one arm and one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be unique")
        if self.env_kind not in ("grid", "point"):
            raise ConfigError(f"unknown env_kind {self.env_kind!r}")
        if self.trailing_window < 1:
            raise ConfigError("trailing_window must be positive")

    @classmethod
    def from_payload(cls, payload, **overrides):
        try:
            env = payload["env"]
            maze = MazeSpec.from_payload(env["maze"])
            hier = HierConfig(**payload.get("hier", {}))
            fields = dict(
                maze=maze,
                hier=hier,
                out_dir=payload["out_dir"],
                env_kind=env.get("kind", "grid"),
                point_step_length=env.get("step_length", 0.5),
                arms=tuple(payload.get("arms", ["full"])),
                seeds=tuple(int(s) for s in payload.get("seeds", [0])),
                trailing_window=int(payload.get("trailing_window", 100)),
                deterministic_timing=bool(payload.get("deterministic_timing", False)),
            )
            fields.update(overrides)
            return cls(**fields)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad run config: {exc}") from exc

    @classmethod
    def load(cls, path, **overrides):
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_payload(payload, **overrides)


def arm_config(hier, arm):
    """Hierarchy config with the arm's intrinsic-scale mask applied."""
    use_high, use_low = ARM_MASKS[arm]
    return dataclasses.replace(
        hier,
        high_scale=hier.high_scale if use_high else 0.0,
        low_scale=hier.low_scale if use_low else 0.0,
    )


def build_env(config):
    if config.env_kind == "grid":
        return make_env("grid", config.maze)
    return make_env("point", config.maze, step_length=config.point_step_length)


def build_trainer(config, arm, seed):
    env = build_env(config)
    return HierarchicalTrainer(
        env, arm_config(config.hier, arm), seed,
        record_wall_clock=not config.deterministic_timing)


def _fmt(value):
    if isinstance(value, float):  # covers numpy scalars, which subclass float
        return repr(float(value))  # shortest round-trip representation
    return str(value)


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for r in rows:
            writer.writerow([
                r.episode, r.steps, _fmt(r.external_return), int(r.success),
                r.graph_occupancy, r.codec_phases, _fmt(r.last_codec_loss),
                _fmt(r.wall_ms),
            ])


def load_metrics_csv(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != METRICS_COLUMNS:
            raise ValueError(f"unexpected metrics columns in {path}")
        for row in reader:
            out.append(EpisodeStats(
                episode=int(row["episode"]),
                steps=int(row["steps"]),
                external_return=float(row["external_return"]),
                success=bool(int(row["success"])),
                graph_occupancy=int(row["graph_occupancy"]),
                codec_phases=int(row["codec_phases"]),
                last_codec_loss=float(row["last_codec_loss"]),
                wall_ms=float(row["wall_clock_ms"]),
                trajectory_digest="",
            ))
    return out


def trailing_success_rate(rows, window):
    tail = rows[-window:]
    return sum(1 for r in tail if r.success) / len(tail)


def run_dir(config, arm, seed):
    return Path(config.out_dir) / arm / f"seed_{seed}"


def run_single(config, arm, seed):
    """Train one (arm, seed) pair and write its artifact directory."""
    trainer = build_trainer(config, arm, seed)
    rows = [trainer.run_episode() for _ in range(config.hier.episodes)]

    out = run_dir(config, arm, seed)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", rows)
    if trainer.graph is not None:
        trainer.graph.save(out / "graph.json")
        trainer.codec.save(out / "codec.json")
    (out / "high_q.json").write_text(json.dumps(trainer.high.to_payload()))
    (out / "low_q.json").write_text(json.dumps(trainer.low.to_payload()))
    masked = arm_config(config.hier, arm)
    (out / "run.json").write_text(json.dumps({
        "arm": arm,
        "seed": seed,
        "env": {"kind": config.env_kind, "maze": config.maze.to_payload(),
                "step_length": config.point_step_length},
        "hier": dataclasses.asdict(masked),
    }, indent=2))
    return rows


def _sweep_job(args):
    config, arm, seed = args
    rows = run_single(config, arm, seed)
    return trailing_success_rate(rows, config.trailing_window)


def run(config, workers=1):
    """Execute every (arm, seed) pair and write summary.json.

    Seeds may run in parallel worker processes; each owns its full module
    stack and writes only its own artifact directory, so the summary is
    identical for any worker count. Returns the summary dict: per arm, the
    per-seed trailing-window success rates with their mean and standard
    deviation (sample std for two or more seeds).
    """
    jobs = [(config, arm, seed) for arm in config.arms for seed in config.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tail_rates = list(pool.map(_sweep_job, jobs))
    else:
        tail_rates = [_sweep_job(job) for job in jobs]

    summary = {"trailing_window": config.trailing_window, "arms": {}}
    per_arm = len(config.seeds)
    for i, arm in enumerate(config.arms):
        per_seed = tail_rates[i * per_arm:(i + 1) * per_arm]
        values = np.array(per_seed)
        summary["arms"][arm] = {
            "seeds": list(config.seeds),
            "per_seed_trailing_success": per_seed,
            "mean": float(values.mean()),
            "std": float(values.std(ddof=1)) if len(per_seed) > 1 else 0.0,
        }
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _load_run_metadata(directory):
    directory = Path(directory)
    meta_path = directory / "run.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no run artifacts at {directory}")
    return json.loads(meta_path.read_text())


def dump_graph(directory):
    """Reload a run's final graph and return its payload (round-trip checked)."""
    meta = _load_run_metadata(directory)
    payload = json.loads((Path(directory) / "graph.json").read_text())
    graph = StateGraph.from_payload(
        payload, match_radius=meta["hier"]["match_radius"],
        eviction_policy=meta["hier"]["eviction_policy"],
        train_tolerance=meta["hier"]["train_tolerance"])
    round_trip = graph.to_payload()
    if round_trip != payload:
        raise RuntimeError("graph payload failed the round-trip check")
    return round_trip


def pca_components(vectors, n_components=2, max_iterations=10_000, tol=1e-14):
    """Principal directions by power iteration with deflation.

    Returns (components, projected) where components is (n_components, k)
    with each row unit-norm and sign-fixed so its largest-magnitude
    coordinate is positive, and projected is the centered data in the
    component basis. Returns None for degenerate inputs (fewer than two
    rows, or total variance ~ 0); exhausted directions yield zero rows.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        return None
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (X.shape[0] - 1)
    scale = float(np.trace(cov))
    if scale <= 1e-12:
        return None
    components = []
    for _ in range(n_components):
        vec = None
        # deterministic starts: covariance columns by norm, then basis vectors
        starts = list(np.argsort(-np.linalg.norm(cov, axis=0)))
        for col in starts:
            candidate = cov[:, col]
            norm = np.linalg.norm(candidate)
            if norm > 1e-13 * scale:
                vec = candidate / norm
                break
        if vec is None:
            components.append(np.zeros(X.shape[1]))
            continue
        for _ in range(max_iterations):
            nxt = cov @ vec
            norm = np.linalg.norm(nxt)
            if norm <= 1e-13 * scale:
                vec = None
                break
            nxt /= norm
            if np.linalg.norm(nxt - vec) < tol:
                vec = nxt
                break
            vec = nxt
        if vec is None:
            components.append(np.zeros(X.shape[1]))
            continue
        if vec[int(np.argmax(np.abs(vec)))] < 0:
            vec = -vec
        eigenvalue = float(vec @ cov @ vec)
        components.append(vec)
        cov = cov - eigenvalue * np.outer(vec, vec)
    comps = np.stack(components)
    return comps, centered @ comps.T


def dump_embeddings(directory, *, project=False, out_path=None):
    """Write the (slot, feature, embedding) CSV for a run; returns its path.

    With project=True, appends 2-D PCA coordinates of the embeddings when
    at least two distinct embeddings exist; otherwise the projection is
    skipped with a warning on stderr.
    """
    directory = Path(directory)
    meta = _load_run_metadata(directory)
    codec = GraphCodec.load(directory / "codec.json")
    graph_payload = json.loads((directory / "graph.json").read_text())
    graph = StateGraph.from_payload(
        graph_payload, match_radius=meta["hier"]["match_radius"])
    rows = codec.embedding_rows(graph)

    projected = None
    if project:
        result = pca_components(np.array([g for _, _, g in rows])) if rows else None
        if result is None:
            print("warning: PCA projection skipped (fewer than two distinct "
                  "embeddings)", file=sys.stderr)
        else:
            projected = result[1]

    out_path = Path(out_path) if out_path else directory / "embeddings.csv"
    dim = graph.dim
    latent = codec.latent_dim
    header = (["slot"] + [f"phi_{i}" for i in range(dim)]
              + [f"g_{i}" for i in range(latent)])
    if projected is not None:
        header += ["pca_0", "pca_1"]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, (slot, phi, emb) in enumerate(rows):
            record = [slot] + [_fmt(x) for x in phi] + [_fmt(x) for x in emb]
            if projected is not None:
                record += [_fmt(float(projected[i, 0])), _fmt(float(projected[i, 1]))]
            writer.writerow(record)
    return out_path


def evaluate_run(directory, episodes=20):
    """Greedy rollouts from a run's saved learners; no learning, no RNG."""
    directory = Path(directory)
    meta = _load_run_metadata(directory)
    maze = MazeSpec.from_payload(meta["env"]["maze"])
    env = make_env(meta["env"]["kind"], maze) if meta["env"]["kind"] == "grid" \
        else make_env("point", maze, step_length=meta["env"]["step_length"])
    hier = HierConfig(**meta["hier"])
    high = QLearner.from_payload(json.loads((directory / "high_q.json").read_text()))
    low = QLearner.from_payload(json.loads((directory / "low_q.json").read_text()))
    displacements = subgoal_displacements(hier.subgoal_magnitudes)
    bounds = env.position_bounds()

    successes = 0
    total_return = 0.0
    for _ in range(episodes):
        state, phi = env.reset(None)
        subgoal = None
        t = 0
        while True:
            if t % hier.subgoal_period == 0:
                _, subgoal = select_subgoal(high, phi, bounds, 0.0, None, displacements)
            action = select_action(low, phi, subgoal, 0.0, None)
            state, phi, r_ext, done, success = env.step(state, action)
            total_return += r_ext
            t += 1
            if done:
                successes += int(success)
                break
    return {"episodes": episodes, "success_rate": successes / episodes,
            "mean_return": total_return / episodes}
