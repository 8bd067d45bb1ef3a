"""Objective, QoS rates, running normalisation and CSV/JSON export.

File layout written by :func:`export` (all CSV, header row first):

``episodes.csv``
    run, policy, seed, episode, f_time, f_energy, f_time_norm, f_energy_norm,
    f_total, deadline_rate, coverage_rate, tasks_generated, tasks_completed,
    tasks_failed, fl_bytes, loss_vel, loss_off, loss_critic, audit_violations
``tasks.csv``
    run, seed, episode, then :data:`uavmec.tasking.CSV_COLUMNS`
``ledgers.csv``
    run, seed, episode, uav, trajectory, uplink, decision, forward, process,
    return, downlink, total
``train_log.csv``
    run, seed, then :data:`TRAIN_LOG_COLUMNS` (one row per learning agent per episode)
``long.csv``
    run, policy, seed, episode, metric, value  (plot-ready long format)
``summary.json``
    config hash, seeds, per-run means
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .tasking import CSV_COLUMNS

EPS = 1e-9

EPISODE_COLUMNS = ("run", "policy", "seed", "episode", "f_time", "f_energy", "f_time_norm",
                   "f_energy_norm", "f_total", "deadline_rate", "coverage_rate",
                   "tasks_generated", "tasks_completed", "tasks_failed", "fl_bytes",
                   "loss_vel", "loss_off", "loss_critic", "audit_violations")
LEDGER_COLUMNS = ("trajectory", "uplink", "decision", "forward", "process", "return",
                  "downlink", "total")
TRAIN_LOG_COLUMNS = ("episode", "uav", "updates", "loss_vel", "loss_off", "loss_critic",
                     "entropy_vel", "entropy_off", "reward_performance", "reward_deadline",
                     "reward_coverage", "reward_total")
LONG_METRICS = ("f_time", "f_energy", "f_total", "deadline_rate", "coverage_rate", "fl_bytes")


def normalize(value: float, lo: float, hi: float, eps: float = EPS) -> float:
    """Min-max normalise into [0, 1]; the denominator never drops below ``eps``."""
    if hi < lo:
        raise ValueError("hi must be >= lo")
    return min(1.0, max(0.0, (value - lo) / max(hi - lo, eps)))


def weighted_cost(f_time_norm: float, f_energy_norm: float, alpha: float, beta: float) -> float:
    if abs(alpha + beta - 1.0) > 1e-12:
        raise ValueError("alpha + beta must equal 1")
    return alpha * f_time_norm + beta * f_energy_norm


class RunningMinMax:
    """Extrema of episode-level time and energy cost seen so far in a run."""

    def __init__(self):
        self.min_time = math.inf
        self.max_time = -math.inf
        self.min_energy = math.inf
        self.max_energy = -math.inf

    def update(self, f_time: float, f_energy: float) -> None:
        if math.isfinite(f_time):
            self.min_time = min(self.min_time, f_time)
            self.max_time = max(self.max_time, f_time)
        self.min_energy = min(self.min_energy, f_energy)
        self.max_energy = max(self.max_energy, f_energy)

    def normalize(self, f_time: float, f_energy: float) -> tuple[float, float]:
        t = normalize(f_time, self.min_time, self.max_time) if math.isfinite(f_time) else 1.0
        return t, normalize(f_energy, self.min_energy, self.max_energy)


class EpisodeSink:
    """Collects per-task outcomes and coverage samples for one episode."""

    def __init__(self):
        self.records = []
        self.failures: list[tuple[int, str]] = []
        self.generated = 0
        self.coverage_sum = 0.0
        self.coverage_steps = 0

    def add_task(self, rec) -> None:
        self.records.append(rec)

    def add_failure(self, task, reason: str) -> None:
        self.failures.append((task.id, reason))

    def add_generated(self, n: int) -> None:
        self.generated += n

    def add_coverage(self, cov: np.ndarray) -> None:
        covered = (np.asarray(cov).sum(axis=0) >= 1).mean() if cov.size else 0.0
        self.coverage_sum += float(covered)
        self.coverage_steps += 1


def qos_rates(records, generated: int, coverage_sum: float, coverage_steps: int):
    """Deadline satisfaction over all generated tasks and time-averaged coverage.

    Returns ``(deadline_rate, coverage_rate, no_tasks_flag)``.
    """
    met = sum(1 for r in records if r.met_deadline)
    if generated == 0:
        dl, flag = 1.0, True
    else:
        dl, flag = met / generated, False
    cov = coverage_sum / coverage_steps if coverage_steps else 0.0
    return dl, cov, flag


@dataclass
class EpisodeMetrics:
    episode: int
    seed: int
    f_time: float
    f_energy: float
    f_time_norm: float
    f_energy_norm: float
    f_total: float
    deadline_rate: float
    coverage_rate: float
    tasks_generated: int
    tasks_completed: int
    tasks_failed: int
    fl_bytes: float = 0.0
    losses: dict = field(default_factory=dict)
    audit_violations: int = 0
    no_tasks: bool = False


def episode_metrics(sink: EpisodeSink, ledgers, minmax: RunningMinMax, alpha: float, beta: float,
                    episode: int, seed: int, fl_bytes: float = 0.0, losses=None,
                    audit_violations: int = 0) -> EpisodeMetrics:
    times = [r.t_total for r in sink.records]
    f_time = float(np.mean(times)) if times else math.inf
    f_energy = float(np.mean([l.total for l in ledgers]))
    minmax.update(f_time, f_energy)
    t_n, e_n = minmax.normalize(f_time, f_energy)
    dl, cov, flag = qos_rates(sink.records, sink.generated, sink.coverage_sum, sink.coverage_steps)
    return EpisodeMetrics(episode, seed, f_time, f_energy, t_n, e_n, weighted_cost(t_n, e_n, alpha, beta),
                          dl, cov, sink.generated, len(sink.records), len(sink.failures),
                          fl_bytes, dict(losses or {}), audit_violations, flag)


def pooled_weighted_cost(rows, alpha: float, beta: float) -> list[float]:
    """Re-normalise raw ``(f_time, f_energy)`` pairs with extrema pooled over
    every row passed in (used to compare policies on one scale)."""
    ft = np.array([r.f_time for r in rows], dtype=float)
    fe = np.array([r.f_energy for r in rows], dtype=float)
    fin = np.isfinite(ft)
    t_lo, t_hi = (ft[fin].min(), ft[fin].max()) if fin.any() else (0.0, 0.0)
    e_lo, e_hi = fe.min(), fe.max()
    out = []
    for t, e in zip(ft, fe):
        tn = normalize(t, t_lo, t_hi) if math.isfinite(t) else 1.0
        out.append(weighted_cost(tn, normalize(e, e_lo, e_hi), alpha, beta))
    return out


# --- export -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return "-".join(str(x) for x in v)
    return str(v)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def episode_row(run: str, policy: str, m: EpisodeMetrics) -> dict:
    return {"run": run, "policy": policy, "seed": m.seed, "episode": m.episode,
            "f_time": m.f_time, "f_energy": m.f_energy, "f_time_norm": m.f_time_norm,
            "f_energy_norm": m.f_energy_norm, "f_total": m.f_total,
            "deadline_rate": m.deadline_rate, "coverage_rate": m.coverage_rate,
            "tasks_generated": m.tasks_generated, "tasks_completed": m.tasks_completed,
            "tasks_failed": m.tasks_failed, "fl_bytes": m.fl_bytes,
            "loss_vel": m.losses.get("vel", 0.0), "loss_off": m.losses.get("off", 0.0),
            "loss_critic": m.losses.get("critic", 0.0), "audit_violations": m.audit_violations}


def export(results, out_dir, config_hash: str = "", extra: dict | None = None) -> list[Path]:
    """Write every run in ``results`` (list of :class:`uavmec.runner.RunResult`)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ep_rows, task_rows, ledger_rows, long_rows, train_rows = [], [], [], [], []
    summary_runs = {}
    for r in results:
        for m in r.episodes:
            row = episode_row(r.name, r.policy, m)
            ep_rows.append(row)
            for metric in LONG_METRICS:
                long_rows.append({"run": r.name, "policy": r.policy, "seed": m.seed,
                                  "episode": m.episode, "metric": metric, "value": row[metric]})
        for ep, rec in r.task_records:
            d = {c: getattr(rec, c) for c in CSV_COLUMNS if c != "path"}
            d.update(run=r.name, seed=r.seed, episode=ep, path=rec.path)
            task_rows.append(d)
        for ep, led in r.ledger_rows:
            d = dict(led.as_row())
            d.update(run=r.name, seed=r.seed, episode=ep)
            ledger_rows.append(d)
        train_rows.extend({**row, "run": r.name, "seed": r.seed} for row in r.train_log)
        summary_runs.setdefault(r.name, []).append(
            {"seed": r.seed, "mean_f_total": float(np.mean([m.f_total for m in r.episodes])) if r.episodes else None,
             "mean_deadline_rate": float(np.mean([m.deadline_rate for m in r.episodes])) if r.episodes else None,
             "audit": r.audit})
    paths = [out / n for n in ("episodes.csv", "tasks.csv", "ledgers.csv", "long.csv",
                                 "train_log.csv", "summary.json")]
    _write_csv(paths[0], EPISODE_COLUMNS, ep_rows)
    _write_csv(paths[1], ("run", "seed", "episode") + CSV_COLUMNS, task_rows)
    _write_csv(paths[2], ("run", "seed", "episode", "uav") + LEDGER_COLUMNS, ledger_rows)
    _write_csv(paths[3], ("run", "policy", "seed", "episode", "metric", "value"), long_rows)
    _write_csv(paths[4], ("run", "seed") + TRAIN_LOG_COLUMNS, train_rows)
    summary = {"config_hash": config_hash, "runs": summary_runs}
    if extra:
        summary.update(extra)
    paths[5].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths


def as_dict(m: EpisodeMetrics) -> dict:
    return asdict(m)
