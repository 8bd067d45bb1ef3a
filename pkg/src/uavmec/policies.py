"""Reference (non-learning) policies used as comparison points.

A policy maps the world to one :class:`~uavmec.sim.Action` per UAV via
``policy.actions(world)``.
"""

from __future__ import annotations

import math

import numpy as np

from .sim import Action, slot_to_uav


class RandomPolicy:
    """Velocity uniform over the disk of radius ``v_max``; offload slot
    uniform over the feasible slots."""

    name = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def _offload(self, k, task, mask):
        return int(self.rng.choice(np.flatnonzero(mask)))

    def actions(self, world) -> list[Action]:
        out = []
        for u in world.uavs:
            r = u.v_max * math.sqrt(self.rng.random())
            phi = self.rng.uniform(0.0, 2.0 * math.pi)
            out.append(Action((r * math.cos(phi), r * math.sin(phi)), self._offload))
        return out


class GreedyPolicy:
    """Fly toward the centroid of uncovered devices (or, when every device is
    covered, of the devices this UAV serves); offload to the least-loaded
    feasible UAV, ties to the lower slot."""

    name = "greedy"

    def __init__(self, world=None):
        self.world = world

    def _offload(self, k, task, mask):
        w = self.world
        loads = [w.queues[slot_to_uav(k, s, w.K)].load if mask[s] else math.inf
                 for s in range(len(mask))]
        return int(np.argmin(loads))

    def velocity(self, world, k: int) -> tuple[float, float]:
        u = world.uavs[k]
        locs = np.array([d.loc for d in world.devices])
        cov = world.coverage.sum(axis=0)
        target = locs[cov == 0]
        if len(target) == 0:
            pos = world.positions()
            rssi_order = np.argmin(((pos[None, :, :2] - locs[:, None, :]) ** 2).sum(-1), axis=1)
            target = locs[rssi_order == k]
        if len(target) == 0:
            return 0.0, 0.0
        delta = target.mean(axis=0) - u.pos[:2]
        dist = float(np.hypot(*delta))
        if dist < 1e-9:
            return 0.0, 0.0
        speed = min(u.v_max, dist / world.cfg.dt)
        return float(delta[0] / dist * speed), float(delta[1] / dist * speed)

    def actions(self, world) -> list[Action]:
        self.world = world
        return [Action(self.velocity(world, k), self._offload) for k in range(world.K)]


def make_reference_policy(kind: str, rng: np.random.Generator):
    if kind == "random":
        return RandomPolicy(rng)
    if kind in ("greedy", "greedy-nearest"):
        return GreedyPolicy()
    raise ValueError(f"unknown reference policy '{kind}'")
