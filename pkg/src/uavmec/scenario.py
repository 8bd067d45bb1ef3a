"""Scenario generation: device placement and k-means UAV initialisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Scenario:
    device_loc: np.ndarray  # (M, 2)
    rates: np.ndarray  # (M,) tasks/s
    uav_pos: np.ndarray  # (K, 3), altitude in the last column
    cpu_freq: np.ndarray  # (K,) Hz

    def to_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                        for a in (self.device_loc, self.rates, self.uav_pos, self.cpu_freq))


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator, iters: int = 50) -> np.ndarray:
    """Lloyd's algorithm, fixed ``iters`` rounds, D^2-weighted seeding.

    With ``k`` larger than the number of points the surplus centroids are
    random duplicates of existing points.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k > n:
        extra = points[rng.integers(0, n, size=k - n)]
        return np.vstack([kmeans(points, n, rng, iters), extra])
    centers = [points[rng.integers(0, n)]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0.0:
            centers.append(points[rng.integers(0, n)])
        else:
            centers.append(points[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    for _ in range(iters):
        label = np.argmin(((points[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        for j in range(k):
            members = points[label == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return centers


def generate_scenario(cfg, seed: int | None = None) -> Scenario:
    """Uniform devices, k-means UAV ground positions, uniform altitudes."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed if seed is None else seed, 1]))
    w, h = cfg.area
    M, K = cfg.n_devices, cfg.n_uavs
    if K < 1 or M < 1:
        raise ValueError("need at least one UAV and one device")
    dev = np.column_stack([rng.uniform(0, w, M), rng.uniform(0, h, M)])
    rates = rng.uniform(*cfg.rate_range, size=M)
    xy = kmeans(dev, K, rng, cfg.kmeans_iters)
    alt = rng.uniform(*cfg.altitude_range, size=K)
    freq = rng.uniform(*cfg.cpu_freq_range, size=K)
    return Scenario(dev, rates, np.column_stack([xy, alt]), freq)
