import json

import numpy as np
import pytest

from uavmec import cli
from uavmec.config import make_config
from uavmec.policies import GreedyPolicy, RandomPolicy, make_reference_policy
from uavmec.runner import Learner, run_learning
from uavmec.scenario import generate_scenario, kmeans

from conftest import SMALL_LEARN
from helpers import make_world

QUICK = ["--episodes", "1", "--set", "episode_len=20"]


# --- scenario ----------------------------------------------------------------

def test_kmeans_single_point():
    pts = np.tile([[3.0, 4.0]], (6, 1))
    assert np.allclose(kmeans(pts, 3, np.random.default_rng(0)), [[3.0, 4.0]] * 3)


def test_kmeans_one_cluster_is_mean():
    pts = np.random.default_rng(1).uniform(0, 100, (20, 2))
    assert np.allclose(kmeans(pts, 1, np.random.default_rng(0))[0], pts.mean(axis=0))


def test_kmeans_pads_when_k_exceeds_points():
    pts = np.array([[0.0, 0.0], [10.0, 0.0]])
    c = kmeans(pts, 4, np.random.default_rng(2))
    assert c.shape == (4, 2)
    assert all(any(np.allclose(row, p) for p in pts) for row in c)


def test_scenario_is_deterministic(cfg):
    a, b = generate_scenario(cfg, 5), generate_scenario(cfg, 5)
    assert a.to_bytes() == b.to_bytes()
    assert generate_scenario(cfg, 6).to_bytes() != a.to_bytes()
    lo, hi = cfg.altitude_range
    assert np.all((a.uav_pos[:, 2] >= lo) & (a.uav_pos[:, 2] <= hi))
    assert np.all((a.device_loc >= 0) & (a.device_loc <= np.array(cfg.area)))


# --- reference policies --------------------------------------------------------

def test_greedy_flies_toward_lone_device(cfg):
    w = make_world(cfg, [[0, 0, 100]], [[3000.0, 4000.0]])
    vx, vy = GreedyPolicy().velocity(w, 0)
    assert np.hypot(vx, vy) == pytest.approx(cfg.v_max)
    assert vx / vy == pytest.approx(3 / 4)


def test_random_policy_is_reproducible(cfg):
    w = make_world(cfg, [[0, 0, 100], [50, 0, 100]], [[0, 0]])
    a = [x.velocity for _ in range(5) for x in RandomPolicy(np.random.default_rng(3)).actions(w)]
    b = [x.velocity for _ in range(5) for x in RandomPolicy(np.random.default_rng(3)).actions(w)]
    assert a == b
    assert all(np.hypot(*v) <= cfg.v_max for v in a)


def test_greedy_offloads_to_least_loaded(cfg):
    w = make_world(cfg, [[0, 0, 100], [50, 0, 100], [0, 50, 100]], [[0, 0]])
    w.queues[1].load = 0.9 * cfg.load_max
    w.queues[2].load = 0.1 * cfg.load_max
    w.queues[0].load = 0.95 * cfg.load_max
    pol = GreedyPolicy(w)
    assert pol._offload(0, None, [True, True, True]) == 2
    assert pol._offload(0, None, [True, True, False]) == 1


def test_unknown_policy():
    with pytest.raises(ValueError):
        make_reference_policy("oracle", np.random.default_rng(0))


# --- command line --------------------------------------------------------------

def test_eval_random_writes_outputs(tmp_path, capsys):
    assert cli.main(["eval", "--policy", "random", "--seed", "2", "--out", str(tmp_path)] + QUICK) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    cfg = make_config("desk", {"episodes": 1, "episode_len": 20})
    assert summary["config_hash"] == cfg.config_hash() and summary["seeds"] == [2]
    assert len((tmp_path / "episodes.csv").read_text().splitlines()) == 2
    assert "seed 2" in capsys.readouterr().out


def test_frozen_evaluation_leaves_parameters():
    cfg = make_config("desk", {"episodes": 2, "episode_len": 20, "learn": dict(SMALL_LEARN)})
    r = run_learning(cfg, 0, train=False)
    fresh = Learner(cfg, 0)
    for a, b in zip(r.learner.agents, fresh.agents):
        assert np.array_equal(a.params.flat(), b.params.flat())


def test_train_then_eval_checkpoints(tmp_path):
    args = ["--seed", "1", "--episodes", "1", "--set", "episode_len=10"]
    for k, v in SMALL_LEARN.items():
        args += ["--set", f"learn.{k}={v}"]
    assert cli.main(["train", "--out", str(tmp_path / "t")] + args) == 0
    ck = tmp_path / "t" / "checkpoints" / "seed1"
    assert sorted(p.name for p in ck.iterdir()) == ["uav0.ckpt", "uav1.ckpt", "uav2.ckpt"]
    assert cli.main(["eval", "--policy", "learned", "--checkpoints", str(ck),
                     "--out", str(tmp_path / "e")] + args) == 0
    assert (tmp_path / "e" / "episodes.csv").exists()
    # a checkpoint built for a different architecture is rejected cleanly
    assert cli.main(["eval", "--policy", "learned", "--checkpoints", str(ck), "--seed", "1",
                     "--episodes", "1", "--set", "episode_len=10"]) == 2


def test_oracle_check_agrees(tmp_path, capsys):
    assert cli.main(["oracle-check", "--snapshots", "10", "--out", str(tmp_path)]) == 0
    assert "agree" in capsys.readouterr().out
    assert json.loads((tmp_path / "oracle.json").read_text())["best_mismatches"] == 0


def test_quant_bench_prints_reduction(capsys):
    assert cli.main(["quant-bench", "--rounds", "1"]) == 0
    assert "reduction" in capsys.readouterr().out


def test_invalid_config_exits_2(tmp_path, capsys):
    assert cli.main(["eval", "--set", "no_such_key=1"]) == 2
    assert "no_such_key" in capsys.readouterr().err
    assert cli.main(["eval", "--config", str(tmp_path / "missing.yaml")]) == 2
    (tmp_path / "bad.yaml").write_text("n_uavs: 0\n")
    assert cli.main(["eval", "--config", str(tmp_path / "bad.yaml")]) == 2


def test_flag_beats_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("episodes: 7\nfed:\n  quantize: true\nlearn:\n  gamma: 0.5\n")
    args = cli.build_parser().parse_args(["train", "--config", str(path), "--episodes", "3",
                                          "--quantization", "off"])
    cfg = cli.resolve_config(args)
    assert cfg.episodes == 3 and cfg.fed.quantize is False and cfg.learn.gamma == 0.5


def test_ablation_flags_map_to_config():
    args = cli.build_parser().parse_args(["train", "--fl", "off", "--reputation", "off",
                                          "--features", "mlp", "--set", "learn.lr_vel=0.01"])
    cfg = cli.resolve_config(args)
    assert not cfg.fed.enabled and not cfg.fed.reputation
    assert cfg.learn.features == "mlp" and cfg.learn.lr_vel == 0.01
