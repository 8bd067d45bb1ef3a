"""Discrete-time world engine.

One call to :func:`step_world` advances the clock by exactly ``dt``:
kinematics and flight energy, task arrivals, admission along hop-by-hop
offloading decisions, compute-queue progress, task completions (energy is
debited when a task completes) and end-of-step battery checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import energy as en
from .radio import Radio, distance
from .tasking import (ComputeQueue, InfeasiblePath, NoCoverage, PathRecord, Snapshot, Task,
                      execute_path, select_serving_uav)

log = logging.getLogger(__name__)

# audit keys name the constraint family they check
AUDIT_KEYS = ("velocity", "kinematics", "coverage", "energy", "capacity", "connectivity", "assignment")


@dataclass
class UavState:
    id: int
    pos: np.ndarray  # (x, y, h)
    vel: np.ndarray  # (vx, vy)
    energy_remaining: float
    cpu_freq: float
    v_max: float
    accel: float
    load: float = 0.0
    active: bool = True


@dataclass
class IotDevice:
    id: int
    loc: tuple[float, float]
    rate: float
    # entries: (task_id, absolute deadline, uplink end time)
    queue: list = field(default_factory=list)

    def most_urgent_deadline(self, now: float) -> float:
        if not self.queue:
            return math.inf
        return min(dl - now for _, dl, _ in self.queue)


@dataclass
class Action:
    velocity: tuple[float, float] = (0.0, 0.0)
    # offload(uav, task, mask) -> slot index; None means always local
    offload: Callable | None = None


@dataclass
class InFlight:
    task: Task
    record: PathRecord
    done_at: float
    split: dict


@dataclass
class StepResult:
    """What happened to each UAV during one step (inputs to rewards)."""

    energy: np.ndarray  # J debited per UAV
    served_time: np.ndarray  # sum of T_total of completed tasks, by serving UAV
    overshoot: np.ndarray  # sum of max(0, T_total - c) by serving UAV
    coverage: np.ndarray  # number of covered devices per UAV
    completed: list  # PathRecords completed this step
    failed: int = 0
    arrivals: int = 0


def clip_velocity(v_raw, v_max: float) -> tuple[float, float]:
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    vx, vy = float(v_raw[0]), float(v_raw[1])
    n = math.hypot(vx, vy)
    if n <= v_max:
        return vx, vy
    s = v_max / n
    return vx * s, vy * s


def update_position(u: UavState, dt: float, area=(1000.0, 1000.0)) -> UavState:
    """Advance ``u`` by ``vel * dt`` in x/y; clamp to the area and zero the
    velocity component that hit a wall. Altitude never changes."""
    pos = u.pos.copy()
    vel = u.vel.copy()
    for ax in range(2):
        p = pos[ax] + vel[ax] * dt
        if p < 0.0:
            p, vel[ax] = 0.0, 0.0
        elif p > area[ax]:
            p, vel[ax] = float(area[ax]), 0.0
        pos[ax] = p
    u.pos, u.vel = pos, vel
    return u


def adaptive_update_interval(v, dt_base: float, alpha_speed: float) -> float:
    """Graph refresh interval, shorter for faster UAVs."""
    if dt_base <= 0 or alpha_speed < 0:
        raise ValueError("dt_base must be positive and alpha_speed non-negative")
    return dt_base / (1.0 + alpha_speed * math.hypot(float(v[0]), float(v[1])))


def spawn_tasks(d: IotDevice, dt: float, rng: np.random.Generator, cfg, clock: float,
                first_id: int) -> list[Task]:
    """Poisson(rate * dt) arrivals with uniformly drawn sizes and deadlines."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(rng.poisson(d.rate * dt))
    tasks = []
    for i in range(n):
        tasks.append(Task(
            id=first_id + i,
            origin_device=d.id,
            cycles=float(rng.uniform(*cfg.cycles_range)),
            in_bytes=float(rng.uniform(*cfg.in_bytes_range)),
            out_bytes=float(rng.uniform(*cfg.out_bytes_range)),
            deadline=float(rng.uniform(*cfg.deadline_range)),
            created_at=clock,
        ))
    return tasks


def slot_to_uav(k: int, slot: int, n_uavs: int) -> int:
    """Slot 0 is local; slot j >= 1 is the j-th other UAV in index order."""
    if slot == 0:
        return k
    other = slot - 1
    return other if other < k else other + 1


class WorldState:
    """Single source of truth for one run: entities, queues, clock, ledgers."""

    def __init__(self, cfg, scenario, rng: np.random.Generator, sink=None):
        self.cfg = cfg
        self.radio = Radio(cfg.radio)
        self.scenario = scenario
        self.rng = rng
        self.sink = sink
        self.next_task_id = 0
        self.reset()

    @property
    def K(self) -> int:
        return len(self.uavs)

    @property
    def M(self) -> int:
        return len(self.devices)

    def reset(self) -> None:
        """Episode start: UAVs back at their initial positions with full batteries."""
        cfg, sc = self.cfg, self.scenario
        self.clock = 0.0
        self.step_index = 0
        self.uavs = [UavState(k, np.array(sc.uav_pos[k], dtype=float), np.zeros(2), cfg.battery,
                              float(sc.cpu_freq[k]), cfg.v_max, cfg.accel)
                     for k in range(len(sc.cpu_freq))]
        self.devices = [IotDevice(m, (float(sc.device_loc[m][0]), float(sc.device_loc[m][1])),
                                  float(sc.rates[m])) for m in range(len(sc.rates))]
        self.queues = [ComputeQueue(k) for k in range(self.K)]
        self.ledgers = [en.EnergyLedger(k) for k in range(self.K)]
        self.inflight: dict[int, InFlight] = {}
        self.uplink_until = np.zeros(self.M)
        self.audit = {k: 0 for k in AUDIT_KEYS}
        self.ignored_actions = 0
        self.rejected = 0
        self.forward_counts = np.zeros((self.K, self.K))
        self.decisions = np.zeros(self.K)
        self.assigned = np.zeros(self.K)
        self.completed_ok = np.zeros(self.K)
        self.coverage = self.coverage_matrix()

    # --- observations -------------------------------------------------------
    def positions(self) -> np.ndarray:
        return np.array([u.pos for u in self.uavs])

    def active_mask(self) -> np.ndarray:
        return np.array([u.active for u in self.uavs])

    def coverage_matrix(self) -> np.ndarray:
        """(K, M) 0/1 coverage indicators; inactive UAVs cover nothing."""
        r = self.radio
        cov = np.zeros((self.K, self.M), dtype=int)
        for k, u in enumerate(self.uavs):
            if not u.active:
                continue
            for m, d in enumerate(self.devices):
                cov[k, m] = r.covers(u.pos, d.loc)
        return cov

    def neighbors(self, k: int) -> list[int]:
        pk = self.uavs[k].pos
        return [j for j, u in enumerate(self.uavs)
                if j != k and u.active and distance(pk, u.pos) <= self.cfg.radio.r_comm]

    def coop_frequency(self, k: int, j: int) -> float:
        """Share of UAV ``k``'s offloading decisions that forwarded to ``j``."""
        return float(self.forward_counts[k, j] / max(1.0, self.decisions[k]))

    def transmitting(self) -> list[int]:
        return [m for m in range(self.M) if self.uplink_until[m] > self.clock]

    # --- admission ----------------------------------------------------------
    def offload_mask(self, k: int, task: Task, path: Sequence[int]) -> np.ndarray:
        cfg = self.cfg
        mask = np.zeros(self.K, dtype=bool)
        mask[0] = self.queues[k].load + task.cycles <= cfg.load_max
        if len(path) >= cfg.max_hops:
            return mask
        pk = self.uavs[k].pos
        for slot in range(1, self.K):
            j = slot_to_uav(k, slot, self.K)
            u = self.uavs[j]
            mask[slot] = (u.active and j not in path
                          and distance(pk, u.pos) <= cfg.radio.r_comm
                          and self.queues[j].load + task.cycles <= cfg.load_max)
        return mask

    def snapshot(self, device: int, transmitting: Sequence[int]) -> Snapshot:
        dev = self.devices[device]
        pos = self.positions()
        r = self.radio
        interf = np.array([
            sum(r.device_power_at(pos[k], self.devices[m].loc)
                for m in transmitting if m != device)
            for k in range(self.K)])
        return Snapshot(pos, np.array([u.cpu_freq for u in self.uavs]),
                        np.array([q.load for q in self.queues]), self.active_mask(), dev.loc,
                        interf, r, self.cfg.radio.r_comm, self.cfg.load_max, self.cfg.t_decision)

    def admit(self, task: Task, actions: Sequence[Action], transmitting) -> PathRecord | None:
        dev = self.devices[task.origin_device]
        try:
            k = select_serving_uav(dev.loc, self.positions(), self.active_mask(), self.radio)
        except NoCoverage:
            self._fail(task, "no_coverage")
            return None
        path = [k]
        while True:
            mask = self.offload_mask(k, task, path)
            if not mask.any():
                # nowhere to put the work without breaking a capacity bound
                self._fail(task, "rejected")
                return None
            handle = actions[k].offload
            if handle is None:
                slot = int(np.flatnonzero(mask)[0])
            else:
                slot = int(handle(k, task, mask))
            if not (0 <= slot < len(mask) and mask[slot]):
                raise ValueError(f"UAV {k} chose masked offload slot {slot}")
            self.decisions[k] += 1
            if slot == 0:
                break
            j = slot_to_uav(k, slot, self.K)
            self.forward_counts[k, j] += 1
            path.append(j)
            k = j
        snap = self.snapshot(task.origin_device, transmitting)
        try:
            rec = execute_path(task, path, snap)
        except InfeasiblePath:
            self.audit["assignment"] += 1
            self._fail(task, "infeasible")
            return None
        task.path, task.record = path, rec
        last = path[-1]
        self.queues[last].push(task.id, task.cycles, self.cfg.load_max)
        self.uavs[last].load = self.queues[last].load
        self.assigned[last] += 1
        powers = _Powers(self.cfg.radio.p_tx_uav, self.cfg.radio.p_rx_uav, self.uavs[last].cpu_freq)
        split = en.task_energy(rec, rec.hop_times, powers, self.cfg.energy)
        self.inflight[task.id] = InFlight(task, rec, task.created_at + rec.t_total, split)
        self.uplink_until[task.origin_device] = max(self.uplink_until[task.origin_device],
                                                    task.created_at + rec.t_uplink)
        dev.queue.append((task.id, task.created_at + task.deadline, task.created_at + rec.t_uplink))
        return rec

    def _fail(self, task: Task, reason: str) -> None:
        self.rejected += reason == "rejected"
        if self.sink is not None:
            self.sink.add_failure(task, reason)

    # --- energy -------------------------------------------------------------
    def debit(self, k: int, component: str, joules: float) -> None:
        self.ledgers[k].add(component, joules)
        self.uavs[k].energy_remaining -= joules


@dataclass
class _Powers:
    p_tx: float
    p_rx: float
    freq: float


def step_world(w: WorldState, actions: Sequence[Action]) -> StepResult:
    """Advance ``w`` by one step under ``actions`` (one per UAV). Mutates ``w``."""
    cfg = w.cfg
    dt = cfg.dt
    K = w.K
    res = StepResult(np.zeros(K), np.zeros(K), np.zeros(K), np.zeros(K), [])

    # kinematics + flight energy
    for k, u in enumerate(w.uavs):
        a = actions[k]
        if not u.active:
            if a.velocity is not None and any(a.velocity):
                w.ignored_actions += 1
            continue
        vx, vy = clip_velocity(a.velocity, u.v_max)
        speed = math.hypot(vx, vy)
        if speed > u.v_max * (1 + 1e-12):
            w.audit["velocity"] += 1
        before = u.pos.copy()
        u.vel = np.array([vx, vy])
        update_position(u, dt, cfg.area)
        expect = before[:2] + np.array([vx, vy]) * dt
        clamped = np.clip(expect, 0.0, cfg.area)
        if not np.allclose(u.pos[:2], clamped, atol=1e-9) or u.pos[2] != before[2]:
            w.audit["kinematics"] += 1
        e = en.flight_power(speed, cfg.energy) * dt
        w.debit(k, "trajectory", e)
        res.energy[k] += e

    w.coverage = cov = w.coverage_matrix()
    res.coverage = cov.sum(axis=1).astype(float)
    if w.sink is not None:
        w.sink.add_coverage(cov)

    # device queues only hold tasks still uploading
    for d in w.devices:
        d.queue = [q for q in d.queue if q[2] > w.clock]

    # arrivals
    new_tasks = []
    for d in w.devices:
        tasks = spawn_tasks(d, dt, w.rng, cfg, w.clock, w.next_task_id)
        w.next_task_id += len(tasks)
        new_tasks.extend(tasks)
    res.arrivals = len(new_tasks)
    if w.sink is not None:
        w.sink.add_generated(len(new_tasks))
    sending = set(w.transmitting()) | {t.origin_device for t in new_tasks}
    transmitting = sorted(sending)
    for task in new_tasks:
        rec = w.admit(task, actions, transmitting)
        if rec is None:
            res.failed += 1
        else:
            path = rec.path
            if not w.radio.covers(w.uavs[path[0]].pos, w.devices[task.origin_device].loc):
                w.audit["coverage"] += 1
            for a_, b_ in zip(path, path[1:]):
                if distance(w.uavs[a_].pos, w.uavs[b_].pos) > cfg.radio.r_comm:
                    w.audit["connectivity"] += 1
    for k in range(K):
        if w.queues[k].load > cfg.load_max:
            w.audit["capacity"] += 1

    # compute progress
    for k, u in enumerate(w.uavs):
        if u.active:
            w.queues[k].advance(u.cpu_freq * dt)

    # completions inside (clock, clock + dt]
    end = w.clock + dt
    done = sorted((f.done_at, tid) for tid, f in w.inflight.items() if f.done_at <= end)
    for _, tid in done:
        _complete(w, w.inflight.pop(tid), res)

    for k, u in enumerate(w.uavs):
        u.load = w.queues[k].load

    w.clock = end
    w.step_index += 1

    # batteries: a UAV that cannot afford another hover step stops serving
    for k, u in enumerate(w.uavs):
        if w.ledgers[k].total > cfg.battery * (1 + 1e-12):
            w.audit["energy"] += 1
        if u.active and u.energy_remaining < cfg.energy.p_hover * dt:
            deactivate(w, k)
    return res


def _complete(w: WorldState, f: InFlight, res: StepResult) -> None:
    rec = f.record
    for k, comps in f.split.items():
        for comp, joules in comps.items():
            w.debit(k, comp, joules)
            res.energy[k] += joules
    first = rec.path[0]
    res.served_time[first] += rec.t_total
    res.overshoot[first] += max(0.0, rec.t_total - rec.deadline)
    res.completed.append(rec)
    last = rec.path[-1]
    w.queues[last].remove(rec.task_id)
    w.completed_ok[last] += rec.met_deadline
    if w.sink is not None:
        w.sink.add_task(rec)


def deactivate(w: WorldState, k: int) -> None:
    """Battery exhausted: stop the UAV and fail every in-flight task touching it."""
    u = w.uavs[k]
    u.active = False
    u.vel = np.zeros(2)
    w.queues[k].clear()
    u.load = 0.0
    for tid in sorted(tid for tid, f in w.inflight.items() if k in f.record.path):
        f = w.inflight.pop(tid)
        w.queues[f.record.path[-1]].remove(tid)
        w._fail(f.task, "depleted")


def drain(w: WorldState) -> StepResult:
    """Episode close: finish every in-flight task analytically (energy and outcome)."""
    res = StepResult(np.zeros(w.K), np.zeros(w.K), np.zeros(w.K), np.zeros(w.K), [])
    for _, tid in sorted((f.done_at, tid) for tid, f in w.inflight.items()):
        _complete(w, w.inflight.pop(tid), res)
    for k, u in enumerate(w.uavs):
        u.load = w.queues[k].load
    return res
