"""Link budget: free-space path loss, RSSI, coverage and Shannon capacity.

All powers are linear watts. Devices sit at ground level (z = 0).
"""

from __future__ import annotations

import math

import numpy as np


class DegenerateGeometry(ValueError):
    """Transmitter and receiver are co-located (zero distance)."""


def distance(a, b) -> float:
    """Euclidean distance between two points; 2-D points are lifted to z=0."""
    a = tuple(a) + (0.0,) * (3 - len(a))
    b = tuple(b) + (0.0,) * (3 - len(b))
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def rssi(p_tx: float, gain_const: float, d: float) -> float:
    """Received power ``p_tx * G / d^2``."""
    if d <= 0.0:
        raise DegenerateGeometry("rssi undefined at zero distance")
    return p_tx * gain_const / (d * d)


def coverage_indicator(rssi_w: float, threshold_w: float) -> int:
    return 1 if rssi_w >= threshold_w else 0


def link_capacity(bandwidth: float, signal: float, interference: float, noise: float) -> float:
    """Shannon capacity in bit/s, ``B log2(1 + S / (N + I))``."""
    if bandwidth <= 0 or noise <= 0:
        raise ValueError("bandwidth and noise must be positive")
    if signal < 0 or interference < 0:
        raise ValueError("signal and interference must be non-negative")
    return bandwidth * math.log2(1.0 + signal / (noise + interference))


def uplink_interference(uav_pos, device_locs, transmitting, tx_device: int,
                        p_tx_dev: float, g0: float) -> float:
    """Sum of received power at ``uav_pos`` from every transmitting device except ``tx_device``.

    ``transmitting`` is an iterable of device indices with an uplink in progress.
    """
    total = 0.0
    for m in transmitting:
        if m == tx_device:
            continue
        loc = device_locs[m]
        total += rssi(p_tx_dev, g0, distance(uav_pos, (loc[0], loc[1], 0.0)))
    return total


def pairwise_uav_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt((diff ** 2).sum(-1))


def connected(d: float, r_comm: float) -> bool:
    """Inter-UAV link predicate (effective link iff within range)."""
    return d <= r_comm


class Radio:
    """Convenience wrapper binding the primitives to one parameter set."""

    def __init__(self, params):
        self.p = params
        self.g0 = params.g0
        self.g_inter = params.g_inter
        self.noise = params.noise_w
        self.rssi_min = params.rssi_min_w
        self.rssi_fl = params.rssi_fl_w

    def uav_device_rssi(self, uav_pos, dev_loc) -> float:
        return rssi(self.p.p_tx_uav, self.g0, distance(uav_pos, dev_loc))

    def covers(self, uav_pos, dev_loc) -> bool:
        return bool(coverage_indicator(self.uav_device_rssi(uav_pos, dev_loc), self.rssi_min))

    def inter_rssi(self, pos_a, pos_b) -> float:
        return rssi(self.p.p_tx_uav, self.g_inter, distance(pos_a, pos_b))

    def inter_rate(self, pos_a, pos_b) -> float:
        return link_capacity(self.p.bandwidth_inter, self.inter_rssi(pos_a, pos_b), 0.0, self.noise)

    def device_power_at(self, uav_pos, dev_loc) -> float:
        """Power a transmitting device delivers at ``uav_pos`` (signal or interference)."""
        return rssi(self.p.p_tx_dev, self.g0, distance(uav_pos, dev_loc))

    def uplink_rate(self, uav_pos, dev_loc, interference: float) -> float:
        signal = rssi(self.p.p_tx_dev, self.g0, distance(uav_pos, dev_loc))
        return link_capacity(self.p.bandwidth, signal, interference, self.noise)

    def downlink_rate(self, uav_pos, dev_loc) -> float:
        return link_capacity(self.p.bandwidth, self.uav_device_rssi(uav_pos, dev_loc), 0.0, self.noise)
