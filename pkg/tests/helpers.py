"""Shared builders for tests."""

import numpy as np

from uavmec.scenario import Scenario
from uavmec.sim import WorldState


def make_world(cfg, uav_xyz, device_xy, rates=None, freqs=None, seed=0, sink=None):
    uav_xyz = np.asarray(uav_xyz, dtype=float)
    device_xy = np.asarray(device_xy, dtype=float).reshape(-1, 2)
    rates = np.zeros(len(device_xy)) if rates is None else np.asarray(rates, dtype=float)
    freqs = np.full(len(uav_xyz), 2e9) if freqs is None else np.asarray(freqs, dtype=float)
    sc = Scenario(device_xy, rates, uav_xyz, freqs)
    return WorldState(cfg, sc, np.random.default_rng(seed), sink)
