"""UAV energy: rotor flight power, CMOS compute energy and the per-task ledger."""

from __future__ import annotations

from dataclasses import dataclass, fields

COMPONENTS = ("trajectory", "uplink", "decision", "forward", "process", "return", "downlink")
TASK_COMPONENTS = COMPONENTS[1:]


def flight_power(speed: float, p) -> float:
    """Hover power plus parasitic drag ``0.5 rho A C_D v^3`` (W)."""
    if speed < 0:
        raise ValueError("speed must be non-negative")
    return p.p_hover + 0.5 * p.air_density * p.drag_area * p.drag_coeff * speed ** 3


def trajectory_energy(speed_trace, p) -> float:
    """Piecewise-constant integral of flight power over ``(speed, duration)`` segments."""
    total = 0.0
    for speed, duration in speed_trace:
        if duration < 0:
            raise ValueError("segment durations must be non-negative")
        total += flight_power(speed, p) * duration
    return total


def compute_energy(freq: float, cycles: float, p) -> float:
    if freq <= 0:
        raise ValueError("freq must be positive")
    return p.kappa * freq * freq * cycles


@dataclass
class EnergyLedger:
    uav: int
    trajectory: float = 0.0
    uplink: float = 0.0
    decision: float = 0.0
    forward: float = 0.0
    process: float = 0.0
    ret: float = 0.0
    downlink: float = 0.0
    total: float = 0.0

    def add(self, component: str, joules: float) -> None:
        if joules < 0:
            raise ValueError(f"negative energy for {component}")
        attr = "ret" if component == "return" else component
        setattr(self, attr, getattr(self, attr) + joules)
        self.total += joules

    def component_sum(self) -> float:
        return (self.trajectory + self.uplink + self.decision + self.forward
                + self.process + self.ret + self.downlink)

    def as_row(self) -> dict:
        row = {f.name: getattr(self, f.name) for f in fields(self)}
        row["return"] = row.pop("ret")
        return row


def task_energy(rec, hop_times, powers, p) -> dict[int, dict[str, float]]:
    """Split one task's energy into per-UAV, per-component joules.

    ``rec`` is a completed :class:`~uavmec.tasking.PathRecord`; ``hop_times``
    gives ``(forward_s, return_s)`` per hop ``i -> i+1`` (same order as the path);
    ``powers`` carries ``p_tx``, ``p_rx`` and ``freq`` (executing UAV).
    """
    path = rec.path
    out: dict[int, dict[str, float]] = {k: {} for k in path}

    def put(k, comp, joules):
        out[k][comp] = out[k].get(comp, 0.0) + joules

    first, last = path[0], path[-1]
    put(first, "uplink", powers.p_rx * rec.t_uplink)
    for k in path:
        put(k, "decision", p.p_cpu * rec.t_decision_each)
    for i, (t_fwd, t_ret) in enumerate(hop_times):
        a, b = path[i], path[i + 1]
        put(a, "forward", powers.p_tx * t_fwd)
        put(b, "forward", powers.p_rx * t_fwd)
        # results travel b -> a on the way back
        put(b, "return", powers.p_tx * t_ret)
        put(a, "return", powers.p_rx * t_ret)
    put(last, "process", p.p_idle * rec.t_queue + compute_energy(powers.freq, rec.cycles, p))
    put(first, "downlink", powers.p_tx * rec.t_downlink)
    return out
