"""Build each UAV's local graph from the world state.

Node rows are 10 wide for both graphs so the layers can share an input width:

UAV row:    x, y, altitude, vx, vy, energy, load, cpu_freq, 0, 1
device row: x, y, queue_len, rate, urgency, 0, 0, 0, 1, 0

The last two columns flag the node type. Everything is standardised to O(1):
positions by the area side, altitude by the top of its range, velocity by
v_max, energy by the battery, load by the load ceiling, frequency by the top
of its range, rates by the top arrival rate, urgency by the longest deadline,
queue length by 10.

Cooperation edges (distance, RSSI, bandwidth, cooperation frequency) exist
between any two UAVs of the local graph within radio range; service edges
(distance, RSSI, uplink spectral efficiency) join the UAV to each covered
device in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import w_to_dbm
from .gat import transfer_matrix

NODE_DIM = 10
COOP_EDGE_DIM = 4
SERV_EDGE_DIM = 3
RSSI_SPAN_DB = 30.0
QUEUE_SCALE = 10.0


@dataclass
class LocalGraph:
    uav: int
    coop_ids: list  # UAV indices, self first
    coop_x: np.ndarray  # (n_c, NODE_DIM)
    coop_e: np.ndarray  # (n_c, n_c, COOP_EDGE_DIM)
    coop_mask: np.ndarray  # (n_c, n_c) bool
    serv_ids: list  # device indices of rows 1..
    serv_x: np.ndarray  # (1 + n_d, NODE_DIM)
    serv_e: np.ndarray
    serv_mask: np.ndarray
    transfer: np.ndarray  # (n_d,) urgency weights over the device rows


class WorldView:
    """Per-step arrays shared by every UAV's graph."""

    def __init__(self, world):
        cfg = world.cfg
        r = world.radio
        self.world = world
        self.pos = world.positions()
        self.dev = np.array([d.loc for d in world.devices], dtype=float)
        dev3 = np.column_stack([self.dev, np.zeros(len(self.dev))])
        d_ud = np.sqrt(((self.pos[:, None, :] - dev3[None, :, :]) ** 2).sum(-1))
        self.d_ud = d_ud
        self.rx_from_dev = cfg.radio.p_tx_dev * r.g0 / d_ud ** 2  # (K, M)
        self.rssi_ud = cfg.radio.p_tx_uav * r.g0 / d_ud ** 2
        tx = np.zeros(len(self.dev))
        tx[world.transmitting()] = 1.0
        interference = (self.rx_from_dev * tx).sum(axis=1, keepdims=True) - self.rx_from_dev * tx
        self.spectral = np.log2(1.0 + self.rx_from_dev / (r.noise + interference))
        diff = self.pos[:, None, :] - self.pos[None, :, :]
        self.d_uu = np.sqrt((diff ** 2).sum(-1))
        self.active = world.active_mask()
        self.coverage = world.coverage
        now = world.clock
        c_max = cfg.deadline_range[1]
        self.urgency = np.array([min(d.most_urgent_deadline(now), c_max) for d in world.devices])
        self.qlen = np.array([len(d.queue) for d in world.devices], dtype=float)
        self.rates = np.array([d.rate for d in world.devices])

    def uav_row(self, k: int) -> np.ndarray:
        w = self.world
        cfg = w.cfg
        u = w.uavs[k]
        return np.array([u.pos[0] / cfg.area[0], u.pos[1] / cfg.area[1], u.pos[2] / cfg.altitude_range[1],
                         u.vel[0] / cfg.v_max, u.vel[1] / cfg.v_max, u.energy_remaining / cfg.battery,
                         u.load / cfg.load_max, u.cpu_freq / cfg.cpu_freq_range[1], 0.0, 1.0])

    def device_row(self, m: int) -> np.ndarray:
        cfg = self.world.cfg
        return np.array([self.dev[m, 0] / cfg.area[0], self.dev[m, 1] / cfg.area[1],
                         self.qlen[m] / QUEUE_SCALE, self.rates[m] / cfg.rate_range[1],
                         self.urgency[m] / cfg.deadline_range[1], 0.0, 0.0, 0.0, 1.0, 0.0])


def build_local_graph(world, k: int, view: WorldView | None = None) -> LocalGraph:
    view = view or WorldView(world)
    cfg = world.cfg
    rp = cfg.radio
    r_comm = rp.r_comm
    g_inter = world.radio.g_inter

    ids = [k] + [j for j in range(world.K)
                 if j != k and view.active[j] and view.d_uu[k, j] <= r_comm]
    n = len(ids)
    cx = np.array([view.uav_row(j) for j in ids])
    ce = np.zeros((n, n, COOP_EDGE_DIM))
    cm = np.eye(n, dtype=bool)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            d = view.d_uu[ids[a], ids[b]]
            if d <= r_comm:
                cm[a, b] = True
                rssi_dbm = w_to_dbm(rp.p_tx_uav * g_inter / d ** 2) if d > 0 else rp.rssi_min_dbm + RSSI_SPAN_DB
                ce[a, b] = (d / r_comm, (rssi_dbm - rp.rssi_min_dbm) / RSSI_SPAN_DB,
                            rp.bandwidth_inter / rp.bandwidth_inter,
                            world.coop_frequency(ids[a], ids[b]))

    devs = [m for m in range(world.M) if view.coverage[k, m]]
    nd = len(devs)
    sx = np.vstack([view.uav_row(k)] + [view.device_row(m) for m in devs])
    se = np.zeros((nd + 1, nd + 1, SERV_EDGE_DIM))
    sm = np.eye(nd + 1, dtype=bool)
    for i, m in enumerate(devs, start=1):
        feat = (view.d_ud[k, m] / cfg.area[0],
                (w_to_dbm(view.rssi_ud[k, m]) - rp.rssi_min_dbm) / RSSI_SPAN_DB,
                view.spectral[k, m] / 10.0)
        se[0, i] = se[i, 0] = feat
        sm[0, i] = sm[i, 0] = True
    trans = transfer_matrix(np.ones(nd, dtype=bool), view.urgency[devs], cfg.learn.gamma_urg) if nd else np.zeros(0)
    return LocalGraph(k, ids, cx, ce, cm, devs, sx, se, sm, trans)


def random_graph(rng: np.random.Generator, n_coop: int = 3, n_dev: int = 4, p_edge: float = 0.7) -> LocalGraph:
    """Random standardised graph with the builder's shapes (tests, demos)."""
    cm = rng.random((n_coop, n_coop)) < p_edge
    cm = cm | cm.T | np.eye(n_coop, dtype=bool)
    ce = rng.normal(size=(n_coop, n_coop, COOP_EDGE_DIM)) * cm[:, :, None]
    ce[np.arange(n_coop), np.arange(n_coop)] = 0.0
    sm = np.eye(n_dev + 1, dtype=bool)
    sm[0, 1:] = sm[1:, 0] = True
    se = rng.normal(size=(n_dev + 1, n_dev + 1, SERV_EDGE_DIM)) * sm[:, :, None]
    se[np.arange(n_dev + 1), np.arange(n_dev + 1)] = 0.0
    urg = rng.uniform(0, 20, n_dev)
    return LocalGraph(0, list(range(n_coop)), rng.normal(size=(n_coop, NODE_DIM)), ce, cm,
                      list(range(n_dev)), rng.normal(size=(n_dev + 1, NODE_DIM)), se, sm,
                      transfer_matrix(np.ones(n_dev, bool), urg, 0.5) if n_dev else np.zeros(0))
