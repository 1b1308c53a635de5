"""Harness: config handling, artifacts, summaries, dumps, PCA, CLI."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from graphhrl.cli import main
from graphhrl.envs import MazeSpec
from graphhrl.harness import (ARM_MASKS, METRICS_COLUMNS, ConfigError,
                              RunConfig, arm_config, dump_embeddings,
                              dump_graph, evaluate_run, load_metrics_csv,
                              pca_components, run, run_dir, run_single)
from graphhrl.agents import HierConfig


def tiny_maze():
    return MazeSpec(width=4, height=4, start=(0, 0), goal=(3, 3),
                    goal_radius=0.5, reward_mode="sparse", max_steps=20)


def tiny_hier(**kwargs):
    defaults = dict(
        subgoal_period=5, discount=0.9, replay_capacity=500, batch_size=8,
        q_hidden_dim=8, q_hidden_layers=1, explore_fraction=0.5,
        graph_capacity=10, match_radius=0.1, sample_period=1, latent_dim=4,
        codec_hidden_dim=16, codec_hidden_layers=1, codec_learning_rate=1e-3,
        episodes=8)
    defaults.update(kwargs)
    return HierConfig(**defaults)


def tiny_config(tmp_path, **kwargs):
    defaults = dict(maze=tiny_maze(), hier=tiny_hier(),
                    out_dir=str(tmp_path / "out"), arms=("full",),
                    seeds=(0,), trailing_window=4, deterministic_timing=True)
    defaults.update(kwargs)
    return RunConfig(**defaults)


def config_payload(tmp_path, **kwargs):
    payload = {
        "env": {"kind": "grid", "maze": tiny_maze().to_payload()},
        "hier": {
            "subgoal_period": 5, "discount": 0.9, "replay_capacity": 500,
            "batch_size": 8, "q_hidden_dim": 8, "q_hidden_layers": 1,
            "graph_capacity": 10, "sample_period": 1, "latent_dim": 4,
            "codec_hidden_dim": 16, "codec_hidden_layers": 1, "episodes": 8,
        },
        "arms": ["full"],
        "seeds": [0],
        "out_dir": str(tmp_path / "out"),
        "trailing_window": 4,
        "deterministic_timing": True,
    }
    payload.update(kwargs)
    return payload


class TestRunConfig:
    def test_arm_masks(self):
        hier = tiny_hier(high_scale=0.3, low_scale=0.7)
        assert (arm_config(hier, "full").high_scale,
                arm_config(hier, "full").low_scale) == (0.3, 0.7)
        assert (arm_config(hier, "high_only").high_scale,
                arm_config(hier, "high_only").low_scale) == (0.3, 0.0)
        assert (arm_config(hier, "low_only").high_scale,
                arm_config(hier, "low_only").low_scale) == (0.0, 0.7)
        assert (arm_config(hier, "vanilla").high_scale,
                arm_config(hier, "vanilla").low_scale) == (0.0, 0.0)

    def test_unknown_arm_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, arms=("medium",))

    def test_payload_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config_payload(tmp_path)))
        config = RunConfig.load(path)
        assert config.hier.subgoal_period == 5
        assert config.arms == ("full",)

    def test_bad_payload_is_config_error(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"env": {}}))
        with pytest.raises(ConfigError):
            RunConfig.load(path)
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "missing.json")


class TestRun:
    def test_deterministic_metrics_bytes(self, tmp_path):
        config_a = tiny_config(tmp_path / "a")
        config_b = tiny_config(tmp_path / "b")
        run(config_a)
        run(config_b)
        csv_a = (run_dir(config_a, "full", 0) / "metrics.csv").read_bytes()
        csv_b = (run_dir(config_b, "full", 0) / "metrics.csv").read_bytes()
        assert csv_a == csv_b

    def test_file_inventory(self, tmp_path):
        config = tiny_config(tmp_path, seeds=(0, 1, 2), arms=("full",))
        run(config)
        csvs = list(Path(config.out_dir).rglob("metrics.csv"))
        summaries = list(Path(config.out_dir).rglob("summary.json"))
        assert len(csvs) == 3 and len(summaries) == 1

    def test_vanilla_echo_masks_scales(self, tmp_path):
        config = tiny_config(tmp_path, arms=("vanilla",),
                             hier=tiny_hier(high_scale=0.5, low_scale=0.5))
        run(config)
        meta = json.loads((run_dir(config, "vanilla", 0) / "run.json").read_text())
        assert meta["hier"]["high_scale"] == 0.0
        assert meta["hier"]["low_scale"] == 0.0

    def test_metrics_columns_exact(self, tmp_path):
        config = tiny_config(tmp_path)
        run(config)
        with open(run_dir(config, "full", 0) / "metrics.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == METRICS_COLUMNS

    def test_summary_recomputation_from_raw_csvs(self, tmp_path):
        config = tiny_config(tmp_path, seeds=(0, 1, 2))
        summary = run(config)
        # independent recomputation with the csv module only
        per_seed = []
        for seed in config.seeds:
            with open(run_dir(config, "full", seed) / "metrics.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
            tail = rows[-config.trailing_window:]
            per_seed.append(sum(int(r["success"]) for r in tail) / len(tail))
        mean = sum(per_seed) / len(per_seed)
        var = sum((x - mean) ** 2 for x in per_seed) / (len(per_seed) - 1)
        arm = summary["arms"]["full"]
        assert arm["per_seed_trailing_success"] == pytest.approx(per_seed, abs=1e-12)
        assert arm["mean"] == pytest.approx(mean, abs=1e-12)
        assert arm["std"] == pytest.approx(var ** 0.5, abs=1e-12)

    def test_parallel_workers_match_serial(self, tmp_path):
        serial = run(tiny_config(tmp_path / "s", seeds=(0, 1)))
        parallel = run(tiny_config(tmp_path / "p", seeds=(0, 1)), workers=2)
        assert serial["arms"] == parallel["arms"]

    def test_metrics_round_trip_via_loader(self, tmp_path):
        config = tiny_config(tmp_path)
        rows = run_single(config, "full", 0)
        loaded = load_metrics_csv(run_dir(config, "full", 0) / "metrics.csv")
        assert len(loaded) == len(rows)
        for a, b in zip(rows, loaded):
            assert a.episode == b.episode
            assert a.external_return == b.external_return  # repr round trip
            assert a.success == b.success


class TestDumps:
    def test_graph_dump_round_trip(self, tmp_path):
        config = tiny_config(tmp_path, hier=tiny_hier(episodes=12))
        run(config)
        payload = dump_graph(run_dir(config, "full", 0))
        assert payload["nodes"], "expected a populated graph"
        for edge in payload["edges"]:
            assert edge["u"] < edge["v"]

    def test_empty_graph_dump(self, tmp_path):
        config = tiny_config(tmp_path, hier=tiny_hier(episodes=1, graph_capacity=50,
                                                      match_radius=100.0))
        # radius so large every state matches node 0: one node, no edges
        run(config)
        payload = dump_graph(run_dir(config, "full", 0))
        assert payload["edges"] == []
        assert len(payload["nodes"]) == 1

    def test_embeddings_csv_shape(self, tmp_path):
        config = tiny_config(tmp_path)
        run(config)
        path = dump_embeddings(run_dir(config, "full", 0))
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["slot", "phi_0", "phi_1"]
        assert len(rows[0]) == 1 + 2 + 4  # slot + phi dims + latent dims
        assert len(rows) - 1 == len(dump_graph(run_dir(config, "full", 0))["nodes"])

    def test_embeddings_with_projection(self, tmp_path):
        config = tiny_config(tmp_path)
        run(config)
        path = dump_embeddings(run_dir(config, "full", 0), project=True)
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        assert header[-2:] == ["pca_0", "pca_1"]

    def test_evaluate_run(self, tmp_path):
        config = tiny_config(tmp_path)
        run(config)
        report = evaluate_run(run_dir(config, "full", 0), episodes=3)
        assert report["episodes"] == 3
        assert 0.0 <= report["success_rate"] <= 1.0


class TestPCA:
    def test_collinear_first_component(self):
        # points on the line y = 2x: first direction is (1,2)/sqrt(5) with
        # the largest-magnitude coordinate positive
        t = np.linspace(-2, 2, 9)
        X = np.stack([t, 2 * t], axis=1)
        comps, projected = pca_components(X)
        expected = np.array([1.0, 2.0]) / np.sqrt(5.0)
        assert np.allclose(comps[0], expected, atol=1e-10)
        assert np.allclose(comps[1], 0.0)
        assert np.allclose(projected[:, 1], 0.0)

    def test_identical_rows_skipped(self):
        X = np.ones((5, 3))
        assert pca_components(X) is None

    def test_single_row_skipped(self):
        assert pca_components(np.ones((1, 3))) is None

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 6))
        comps_a, _ = pca_components(X)
        perm = rng.permutation(40)
        comps_b, _ = pca_components(X[perm])
        assert np.allclose(comps_a, comps_b, atol=1e-8)

    def test_matches_eigendecomposition(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(60, 5)) @ np.diag([3.0, 2.0, 1.0, 0.5, 0.1])
        comps, _ = pca_components(X)
        cov = np.cov(X.T, ddof=1)
        vals, vecs = np.linalg.eigh(cov)
        for i in range(2):
            expected = vecs[:, np.argsort(vals)[::-1][i]]
            dot = abs(float(expected @ comps[i]))
            assert dot == pytest.approx(1.0, abs=1e-8)


class TestCli:
    def test_train_eval_dump_flow(self, tmp_path, capsys):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config_payload(tmp_path)))
        assert main(["train", "--config", str(cfg_path)]) == 0
        captured = capsys.readouterr()
        assert "arms" in captured.out
        rd = str(tmp_path / "out" / "full" / "seed_0")
        assert main(["eval", "--run-dir", rd, "--episodes", "2"]) == 0
        assert main(["dump-graph", "--run-dir", rd]) == 0
        assert main(["dump-embeddings", "--run-dir", rd, "--project"]) == 0

    def test_missing_config_is_exit_1(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.json")]) == 1

    def test_bad_arm_is_exit_1(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config_payload(tmp_path)))
        assert main(["train", "--config", str(cfg_path), "--arm", "bogus"]) == 1

    def test_missing_run_dir_is_exit_2(self, tmp_path):
        assert main(["dump-graph", "--run-dir", str(tmp_path / "ghost")]) == 2

    def test_seed_overrides(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config_payload(tmp_path)))
        assert main(["train", "--config", str(cfg_path), "--seeds", "3,4"]) == 0
        out = tmp_path / "out" / "full"
        assert (out / "seed_3").exists() and (out / "seed_4").exists()
        assert not (out / "seed_0").exists()
