"""Task lifecycle: serving-UAV selection, path timing, compute queues, outcome recording.

Timing follows the three-stage decomposition uplink + path + downlink, with
the path stage split into decision, forward, queue, compute and return.
:func:`oracle_best_path` re-derives the same totals by brute force without
calling the engine's composition code, so the two can cross-check each other.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .radio import Radio, distance


class NoCoverage(RuntimeError):
    """No active UAV reaches the device with RSSI above the service threshold."""


class InfeasiblePath(ValueError):
    """Path violates coverage, connectivity, capacity or simplicity."""


class NoFeasiblePath(RuntimeError):
    pass


class CapacityExceeded(RuntimeError):
    pass


@dataclass
class Task:
    id: int
    origin_device: int
    cycles: float
    in_bytes: float
    out_bytes: float
    deadline: float
    created_at: float
    path: list[int] = field(default_factory=list)
    record: "PathRecord | None" = None

    def __post_init__(self):
        if min(self.cycles, self.in_bytes, self.out_bytes) <= 0 or self.deadline <= 0:
            raise ValueError("task sizes and deadline must be positive")


@dataclass
class PathRecord:
    task_id: int
    path: tuple[int, ...]
    t_uplink: float
    t_decision: float
    t_forward: float
    t_queue: float
    t_compute: float
    t_return: float
    t_downlink: float
    t_total: float
    met_deadline: bool
    deadline: float = 0.0
    cycles: float = 0.0
    t_decision_each: float = 0.0
    # per hop i -> i+1: (forward seconds, return seconds)
    hop_times: tuple[tuple[float, float], ...] = ()

    @property
    def hops(self) -> int:
        return len(self.path)

    @property
    def t_path(self) -> float:
        return self.t_decision + self.t_forward + self.t_queue + self.t_compute + self.t_return


CSV_COLUMNS = ("task_id", "path", "t_uplink", "t_decision", "t_forward", "t_queue",
               "t_compute", "t_return", "t_downlink", "t_total", "deadline", "met_deadline")


def compose_total(t_uplink, t_decision, t_forward, t_queue, t_compute, t_return, t_downlink):
    """The one place a record's total is formed; keeps the sum identity bit-exact."""
    return t_uplink + (t_decision + t_forward + t_queue + t_compute + t_return) + t_downlink


class ComputeQueue:
    """FIFO of ``[task_id, remaining_cycles]`` owned by one UAV."""

    def __init__(self, owner: int):
        self.owner = owner
        self.entries: deque[list] = deque()
        self.load = 0.0

    def __len__(self):
        return len(self.entries)

    def push(self, task_id: int, cycles: float, load_max: float) -> None:
        if self.load + cycles > load_max:
            raise CapacityExceeded(f"UAV {self.owner}: load {self.load + cycles:g} > {load_max:g}")
        self.entries.append([task_id, float(cycles)])
        self.load += cycles

    def advance(self, budget: float) -> list[int]:
        """Serve ``budget`` cycles from the head; return ids that finished."""
        done = []
        while self.entries and budget > 0.0:
            head = self.entries[0]
            if head[1] <= budget:
                budget -= head[1]
                done.append(head[0])
                self.entries.popleft()
            else:
                head[1] -= budget
                budget = 0.0
        self.load = float(sum(e[1] for e in self.entries))
        return done

    def remove(self, task_id: int) -> None:
        self.entries = deque(e for e in self.entries if e[0] != task_id)
        self.load = float(sum(e[1] for e in self.entries))

    def clear(self) -> list[int]:
        ids = [e[0] for e in self.entries]
        self.entries.clear()
        self.load = 0.0
        return ids


def queue_delay(queue, cpu_freq: float) -> float:
    """Time to drain the queued cycles at ``cpu_freq``. ``queue`` may be a
    :class:`ComputeQueue` or a plain cycle count."""
    if cpu_freq <= 0:
        raise ValueError("cpu_freq must be positive")
    load = queue.load if isinstance(queue, ComputeQueue) else float(queue)
    return load / cpu_freq


@dataclass(frozen=True)
class Snapshot:
    """Frozen view of everything one task's timing depends on."""

    uav_pos: np.ndarray  # (K, 3)
    cpu_freq: np.ndarray  # (K,)
    queue_cycles: np.ndarray  # (K,)
    active: np.ndarray  # (K,) bool
    device_loc: tuple[float, float]
    interference: np.ndarray  # (K,) uplink interference at each UAV, W
    radio: Radio
    r_comm: float
    load_max: float
    t_decision: float

    @property
    def n_uavs(self) -> int:
        return len(self.cpu_freq)


def select_serving_uav(device_loc, uav_pos, active, radio: Radio) -> int:
    """Strongest-RSSI active UAV; ties go to the lowest index."""
    best, best_rssi = -1, -1.0
    for k in range(len(uav_pos)):
        if not active[k]:
            continue
        r = radio.uav_device_rssi(uav_pos[k], device_loc)
        if r > best_rssi:
            best, best_rssi = k, r
    if best < 0 or best_rssi < radio.rssi_min:
        raise NoCoverage("no active UAV covers the device")
    return best


def check_path(path, snap: Snapshot, cycles: float) -> None:
    if not path:
        raise InfeasiblePath("empty path")
    if len(set(path)) != len(path):
        raise InfeasiblePath(f"path {path} revisits a UAV")
    for k in path:
        if not snap.active[k]:
            raise InfeasiblePath(f"UAV {k} is inactive")
    if not snap.radio.covers(snap.uav_pos[path[0]], snap.device_loc):
        raise InfeasiblePath("first hop does not cover the origin device")
    for a, b in zip(path, path[1:]):
        if distance(snap.uav_pos[a], snap.uav_pos[b]) > snap.r_comm:
            raise InfeasiblePath(f"hop {a}->{b} exceeds communication range")
    if snap.queue_cycles[path[-1]] + cycles > snap.load_max:
        raise InfeasiblePath(f"UAV {path[-1]} lacks capacity")


def execute_path(task: Task, path, snap: Snapshot) -> PathRecord:
    """Time ``task`` along ``path`` on a frozen snapshot."""
    path = tuple(int(k) for k in path)
    check_path(path, snap, task.cycles)
    radio = snap.radio
    first, last = path[0], path[-1]
    in_bits, out_bits = task.in_bytes * 8.0, task.out_bytes * 8.0

    r_up = radio.uplink_rate(snap.uav_pos[first], snap.device_loc, float(snap.interference[first]))
    t_uplink = in_bits / r_up
    t_decision = sum(snap.t_decision for _ in path)

    hop_times = []
    for a, b in zip(path, path[1:]):
        rate = radio.inter_rate(snap.uav_pos[a], snap.uav_pos[b])
        hop_times.append((in_bits / rate, out_bits / rate))
    t_forward = sum(h[0] for h in hop_times)
    t_return = sum(h[1] for h in reversed(hop_times))

    freq = float(snap.cpu_freq[last])
    t_queue = queue_delay(float(snap.queue_cycles[last]), freq)
    t_compute = task.cycles / freq
    t_downlink = out_bits / radio.downlink_rate(snap.uav_pos[first], snap.device_loc)

    total = compose_total(t_uplink, t_decision, t_forward, t_queue, t_compute, t_return, t_downlink)
    return PathRecord(task.id, path, t_uplink, t_decision, t_forward, t_queue, t_compute,
                      t_return, t_downlink, total, total <= task.deadline,
                      deadline=task.deadline, cycles=task.cycles,
                      t_decision_each=snap.t_decision, hop_times=tuple(hop_times))


def oracle_enumerate(task: Task, snap: Snapshot, max_hops: int, serving: int | None = None):
    """Time every feasible simple path of at most ``max_hops`` UAVs from the
    serving UAV, by direct formula evaluation (independent of the engine).

    Returns a list of ``(path tuple, t_total)`` in enumeration order.
    """
    rad = snap.radio
    p = rad.p
    if serving is None:
        serving = select_serving_uav(snap.device_loc, snap.uav_pos, snap.active, rad)
    others = [k for k in range(snap.n_uavs) if k != serving and snap.active[k]]
    dev = (snap.device_loc[0], snap.device_loc[1], 0.0)

    def d(a, b):
        return math.dist(tuple(a), tuple(b))

    def shannon(bw, s, i):
        return bw * math.log2(1.0 + s / (rad.noise + i))

    # serving-UAV legs do not depend on the path
    ds = d(snap.uav_pos[serving], dev)
    if p.p_tx_uav * rad.g0 / ds ** 2 < rad.rssi_min:
        raise NoFeasiblePath("serving UAV does not cover the device")
    up = shannon(p.bandwidth, p.p_tx_dev * rad.g0 / ds ** 2, float(snap.interference[serving]))
    down = shannon(p.bandwidth, p.p_tx_uav * rad.g0 / ds ** 2, 0.0)
    fixed = 8.0 * task.in_bytes / up + 8.0 * task.out_bytes / down

    out = []
    for extra in range(0, max_hops):
        for tail in itertools.permutations(others, extra):
            path = (serving,) + tail
            ok = all(d(snap.uav_pos[a], snap.uav_pos[b]) <= snap.r_comm for a, b in zip(path, path[1:]))
            if not ok or snap.queue_cycles[path[-1]] + task.cycles > snap.load_max:
                continue
            t = fixed + len(path) * snap.t_decision
            for a, b in zip(path, path[1:]):
                dist_ab = d(snap.uav_pos[a], snap.uav_pos[b])
                r = shannon(p.bandwidth_inter, p.p_tx_uav * rad.g_inter / dist_ab ** 2, 0.0)
                t += 8.0 * (task.in_bytes + task.out_bytes) / r
            f = snap.cpu_freq[path[-1]]
            t += (snap.queue_cycles[path[-1]] + task.cycles) / f
            out.append((path, float(t)))
    return out


def oracle_best_path(task: Task, snap: Snapshot, max_hops: int, serving: int | None = None):
    """Exhaustive search over simple paths of at most ``max_hops`` UAVs.

    Returns ``(path, t_total)``; ties go to the lexicographically smallest path.
    """
    cands = oracle_enumerate(task, snap, max_hops, serving)
    if not cands:
        raise NoFeasiblePath("no path satisfies connectivity and capacity")
    path, t = min(cands, key=lambda c: (c[1], c[0]))
    return list(path), t


def record_outcome(rec: PathRecord, sink) -> None:
    """Append a completed task's timing breakdown to the episode sink."""
    sink.add_task(rec)
