"""Run orchestration: learned and reference-policy episodes, oracle and
quantisation benches.

A run is fully determined by ``(config, seed)``: the scenario, the world's
task stream, every agent's initial weights and action noise, and FL message
drops all draw from child streams of one :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import fedlearn as fl
from .graphnn.graph import WorldView, build_local_graph
from .marl import NETWORKS, Agent, reward
from .metrics import EpisodeSink, RunningMinMax, episode_metrics
from .policies import make_reference_policy
from .scenario import generate_scenario
from .sim import Action, WorldState, drain, step_world
from .tasking import Task, execute_path, oracle_best_path, oracle_enumerate

log = logging.getLogger(__name__)



@dataclass
class RunResult:
    name: str
    policy: str
    seed: int
    episodes: list = field(default_factory=list)
    task_records: list = field(default_factory=list)  # (episode, PathRecord)
    ledger_rows: list = field(default_factory=list)  # (episode, EnergyLedger)
    train_log: list = field(default_factory=list)
    audit: dict = field(default_factory=dict)
    fl_rounds: int = 0
    wall_time: float = 0.0

    def final_mean(self, attr: str, last: int = 10) -> float:
        return float(np.mean([getattr(m, attr) for m in self.episodes[-last:]]))


def _streams(seed: int, n_agents: int):
    ss = np.random.SeedSequence(seed)
    world, fed, policy, *agent = ss.spawn(3 + 2 * n_agents)
    return (np.random.default_rng(world), np.random.default_rng(fed), np.random.default_rng(policy),
            [np.random.default_rng(s) for s in agent[:n_agents]],
            [np.random.default_rng(s) for s in agent[n_agents:]])


def _merge_audit(total: dict, audit: dict) -> None:
    for k, v in audit.items():
        total[k] = total.get(k, 0) + v


def run_episode(world: WorldState, step_fn, on_step=None):
    """Advance ``world`` one episode; ``step_fn(world)`` returns the actions."""
    n = world.cfg.steps_per_episode
    for t in range(n):
        res = step_world(world, step_fn(world))
        if on_step is not None:
            on_step(world, res, t == n - 1)
    drain(world)


def run_reference(cfg, seed: int, kind: str = "random", episodes: int | None = None,
                  name: str | None = None, keep_tasks: bool = False) -> RunResult:
    """Evaluate a non-learning policy (no parameters change)."""
    t0 = time.perf_counter()
    sc = generate_scenario(cfg, seed)
    world_rng, _, policy_rng, _, _ = _streams(seed, cfg.n_uavs)
    policy = make_reference_policy(kind, policy_rng)
    out = RunResult(name or kind, kind, seed)
    mm = RunningMinMax()
    for ep in range(episodes or cfg.episodes):
        sink = EpisodeSink()
        world = WorldState(cfg, sc, world_rng, sink)
        run_episode(world, policy.actions)
        _finish_episode(out, world, sink, mm, ep, seed, keep_tasks)
    out.wall_time = time.perf_counter() - t0
    return out


def _finish_episode(out: RunResult, world, sink, mm, ep, seed, keep_tasks, fl_bytes=0.0, losses=None):
    lc = world.cfg.learn
    n_viol = sum(world.audit.values())
    out.episodes.append(episode_metrics(sink, world.ledgers, mm, lc.alpha_time, lc.beta_energy, ep, seed,
                                        fl_bytes, losses, n_viol))
    _merge_audit(out.audit, world.audit)
    out.ledger_rows.extend((ep, led) for led in world.ledgers)
    if keep_tasks:
        out.task_records.extend((ep, r) for r in sink.records)


class Learner:
    """Agents plus FL coordinator for one run; reusable across train/eval calls."""

    def __init__(self, cfg, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.scenario = generate_scenario(cfg, seed)
        self.world_rng, fed_rng, _, act_rngs, init_rngs = _streams(seed, cfg.n_uavs)
        self.agents = [Agent(k, cfg, act_rngs[k], init_rngs[k]) for k in range(cfg.n_uavs)]
        self.fed = fl.FedCoordinator(cfg, self.agents, fed_rng)
        self.minmax = RunningMinMax()

    def _actions(self, world: WorldState, view_box: list) -> list[Action]:
        view_box[0] = None

        def graph_fn(k):
            if view_box[0] is None:
                view_box[0] = WorldView(world)
            return build_local_graph(world, k, view_box[0])

        acts = []
        for k, (ag, u) in enumerate(zip(self.agents, world.uavs)):
            if not u.active:
                acts.append(Action((0.0, 0.0), None))
                continue
            vel, handle = ag.act(lambda k=k: graph_fn(k), world.clock, u.vel)
            acts.append(Action(vel, handle))
        return acts

    def episode(self, ep: int, train: bool = True, keep_tasks: bool = False, out: RunResult | None = None):
        cfg, lc = self.cfg, self.cfg.learn
        sink = EpisodeSink()
        world = WorldState(cfg, self.scenario, self.world_rng, sink)
        self.fed.reset_episode()
        for ag in self.agents:
            ag.reset_episode()
            ag.frozen = not train
        window = lc.window
        view_box = [None]
        reports = {k: [] for k in range(cfg.n_uavs)}
        rsum = np.zeros((cfg.n_uavs, 3))
        n_steps = cfg.steps_per_episode
        for t in range(n_steps):
            acting = [u.active for u in world.uavs]
            res = step_world(world, self._actions(world, view_box))
            done = t == n_steps - 1
            for k, ag in enumerate(self.agents):
                if not acting[k]:
                    continue
                rb = reward(k, res, lc, lc.reward_time_scale, cfg.energy_scale)
                rsum[k] += (rb.performance, rb.deadline, rb.coverage)
                ag.record(lc.reward_scale * rb.total, done or not world.uavs[k].active)
            if train:
                self.fed.step(world)
                if (t + 1) % window == 0 or done:
                    view = WorldView(world)
                    for k, ag in enumerate(self.agents):
                        if not ag.buffer:
                            continue
                        terminal = done or not world.uavs[k].active
                        v_last = 0.0 if terminal else ag.value_of(
                            lambda k=k: build_local_graph(world, k, view), world.clock, world.uavs[k].vel)
                        reports[k].append(ag.update(v_last))
            else:
                self.fed.refresh_reputations(world)
        drain(world)
        losses = {}
        for k in range(cfg.n_uavs):
            rows = reports[k]
            row = {"episode": ep, "uav": k, "updates": len(rows)}
            for key in ("vel", "off", "critic", "entropy_vel", "entropy_off"):
                name = key if key.startswith("entropy") else f"loss_{key}"
                row[name] = float(np.mean([r[key] for r in rows])) if rows else 0.0
            row.update(reward_performance=rsum[k, 0], reward_deadline=rsum[k, 1],
                       reward_coverage=rsum[k, 2], reward_total=float(rsum[k].sum()))
            if out is not None:
                out.train_log.append(row)
        for key in ("vel", "off", "critic"):
            vals = [r[key] for k in reports for r in reports[k]]
            losses[key] = float(np.mean(vals)) if vals else 0.0
        fl_bytes = float(self.fed.bytes_sent.sum() / cfg.n_uavs)
        if out is not None:
            _finish_episode(out, world, sink, self.minmax, ep, self.seed, keep_tasks, fl_bytes, losses)
        return world, sink


def variant_name(cfg) -> str:
    parts = ["gat" if cfg.learn.features == "gat" else "mlp"]
    if not cfg.fed.enabled:
        parts.append("nofed")
    else:
        parts.append("q" if cfg.fed.quantize else "fp")
        if not cfg.fed.reputation:
            parts.append("norep")
    return "-".join(parts)


def run_learning(cfg, seed: int, episodes: int | None = None, train: bool = True,
                 name: str | None = None, keep_tasks: bool = False, progress=None) -> RunResult:
    """Train (or evaluate with frozen initial weights) for ``episodes`` episodes."""
    t0 = time.perf_counter()
    learner = Learner(cfg, seed)
    out = RunResult(name or variant_name(cfg), "learned" if train else "frozen", seed)
    for ep in range(episodes or cfg.episodes):
        learner.episode(ep, train=train, keep_tasks=keep_tasks, out=out)
        if progress is not None:
            progress(out.episodes[-1])
    out.fl_rounds = len(learner.fed.log)
    out.wall_time = time.perf_counter() - t0
    out.learner = learner
    return out


# --- benches -----------------------------------------------------------------

def random_snapshot(cfg, rng: np.random.Generator, max_k: int = 4):
    """A frozen snapshot with UAVs clustered tightly enough for multi-hop paths."""
    from .radio import Radio
    from .tasking import Snapshot

    K = int(rng.integers(1, max_k + 1))
    centre = rng.uniform(200, 800, 2)
    xy = centre + rng.uniform(-250, 250, (K, 2))
    pos = np.column_stack([xy, rng.uniform(*cfg.altitude_range, K)])
    dev = tuple(float(v) for v in centre + rng.uniform(-300, 300, 2))
    return Snapshot(pos, rng.uniform(*cfg.cpu_freq_range, K), rng.uniform(0, 5e8, K),
                    np.ones(K, dtype=bool), dev, rng.uniform(0, 1e-9, K), Radio(cfg.radio),
                    cfg.radio.r_comm, cfg.load_max, cfg.t_decision)


def random_task(cfg, rng: np.random.Generator, task_id: int = 0) -> Task:
    return Task(task_id, 0, float(rng.uniform(*cfg.cycles_range)), float(rng.uniform(*cfg.in_bytes_range)),
                float(rng.uniform(*cfg.out_bytes_range)), float(rng.uniform(*cfg.deadline_range)), 0.0)


@dataclass
class OracleReport:
    snapshots: int
    paths: int
    worst_rel_error: float
    best_mismatches: int
    seconds: float


def oracle_check(cfg, n_snapshots: int = 100, seed: int = 0, max_k: int = 4,
                 max_hops: int = 3) -> OracleReport:
    """Time every oracle-enumerated path with the engine and compare."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    n_paths, worst, mismatch = 0, 0.0, 0
    for i in range(n_snapshots):
        snap = random_snapshot(cfg, rng, max_k)
        task = random_task(cfg, rng, i)
        cands = oracle_enumerate(task, snap, max_hops)
        for path, t_or in cands:
            rec = execute_path(task, path, snap)
            worst = max(worst, abs(rec.t_total - t_or) / t_or)
            n_paths += 1
        best, _ = oracle_best_path(task, snap, max_hops)
        engine_best = min(cands, key=lambda c: (execute_path(task, c[0], snap).t_total, c[0]))[0]
        mismatch += list(engine_best) != best
    return OracleReport(n_snapshots, n_paths, worst, mismatch, time.perf_counter() - t0)


def quant_bench(cfg, seed: int = 0, rounds: int = 5):
    """Bytes per FL message with and without quantisation for freshly trained-ish agents.

    Gradients for the bit ranking come from one short training window per
    agent. Returns ``(bytes_quantised, bytes_full, reduction)`` per round mean.
    """
    learner = Learner(cfg, seed)
    # one window of real gradients so the bit ranking is meaningful
    _one_window(learner)
    q_bytes, f_bytes = [], []
    fq = cfg.fed
    full = type(fq)(**{**fq.__dict__, "quantize": False})
    for r in range(rounds):
        for ag in learner.agents:
            nets = {n: ag.params.group(n).flat() for n in _fl_networks(cfg)}
            q_bytes.append(fl.comm_cost(fl.make_message(ag.k, nets, ag.last_grads, 1.0, fq)))
            f_bytes.append(fl.comm_cost(fl.make_message(ag.k, nets, ag.last_grads, 1.0, full)))
    q, f = float(np.mean(q_bytes)), float(np.mean(f_bytes))
    return q, f, 1.0 - q / f


def _fl_networks(cfg):
    return ("vel", "off", "critic", "features") if cfg.fed.aggregate_features else ("vel", "off", "critic")


def _one_window(learner: Learner) -> None:
    cfg = learner.cfg
    world = WorldState(cfg, learner.scenario, learner.world_rng, EpisodeSink())
    view_box = [None]
    for ag in learner.agents:
        ag.reset_episode()
    for t in range(min(cfg.learn.window, cfg.steps_per_episode)):
        res = step_world(world, learner._actions(world, view_box))
        for k, ag in enumerate(learner.agents):
            rb = reward(k, res, cfg.learn, cfg.learn.reward_time_scale, cfg.energy_scale)
            ag.record(cfg.learn.reward_scale * rb.total)
    for ag in learner.agents:
        ag.update(0.0)
