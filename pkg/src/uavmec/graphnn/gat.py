"""Graph attention over a UAV's local graph.

Two graphs are processed side by side: the cooperation graph (this UAV and
the UAVs in radio range) and the service graph (this UAV and the devices it
covers). The cooperation layer also receives an urgency-weighted message
from the service layer's device rows (the transfer matrix), injected into the
self row only. After two stacked layers the self rows of both graphs are
concatenated and projected to the spatial embedding.

Edge features enter attention through the keys: the key for pair (i, j) is
``H_j W_k + e_ij W_e``. Self-loops are always present with zero edge features.
"""

from __future__ import annotations

import math

import numpy as np

from .. import invariants
from . import tensor as T
from .nn import Linear, Module, glorot


def attention_weights(queries, keys, mask, d_k: float) -> np.ndarray:
    """Masked multi-head softmax of scaled dot products.

    ``queries``: ``(n, H, d)``; ``keys``: ``(n, H, d)`` (one key per node) or
    ``(n, n, H, d)`` (one key per pair); ``mask``: ``(n, n)`` with
    ``mask[i, j]`` true when ``j`` is a neighbour of ``i``. The diagonal is
    always treated as present. Returns ``(n, n, H)``, each ``[i, :, h]`` summing to 1.
    """
    if d_k <= 0:
        raise ValueError("d_k must be positive")
    q = np.asarray(queries, dtype=float)
    k = np.asarray(keys, dtype=float)
    if k.ndim == 3:
        k = np.broadcast_to(k[None], (q.shape[0],) + k.shape)
    scores = np.einsum("ihd,ijhd->ijh", q, k) / math.sqrt(d_k)
    m = np.array(mask, dtype=bool)
    np.fill_diagonal(m, True)
    scores = np.where(m[:, :, None], scores, -np.inf)
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    a = e / e.sum(axis=1, keepdims=True)
    invariants.check("attention_rows", bool(np.all(np.abs(a.sum(axis=1) - 1.0) <= 1e-6)))
    return a


def transfer_matrix(coverage_row, urgencies, gamma_urg: float) -> np.ndarray:
    """Row of weights ``exp(-gamma * c_m)`` over covered devices, normalised to 1.

    Uncovered devices get 0; with nothing covered the whole row is 0.
    """
    if gamma_urg < 0:
        raise ValueError("gamma_urg must be >= 0")
    cov = np.asarray(coverage_row, dtype=bool)
    c = np.asarray(urgencies, dtype=float)
    if not cov.any():
        return np.zeros(len(cov))
    # shift by the smallest covered urgency so exp never underflows to all-zero
    z = np.where(cov, -gamma_urg * (c - c[cov].min()), -np.inf)
    w = np.exp(z)
    w = w / w.sum()
    invariants.check("transfer_rows", abs(w.sum() - 1.0) <= 1e-6)
    return w


def attention_op(h: T.Tensor, e: np.ndarray, mask: np.ndarray, wz: T.Tensor, wq: T.Tensor,
                 wk: T.Tensor, we: T.Tensor, heads: int) -> T.Tensor:
    """Fused multi-head graph attention with edge-augmented keys.

    Returns the pre-activation ``(n, F)`` aggregate ``sum_j a_ij Z_j`` per head.
    Edge features ``e`` (``(n, n, de)``) and ``mask`` are constants.
    """
    n = h.shape[0]
    F = wz.shape[1]
    d = F // heads
    scale = 1.0 / math.sqrt(d)
    H = h.data
    Wz, Wq, Wk, We = wz.data, wq.data, wk.data, we.data
    Z = (H @ Wz).reshape(n, heads, d)
    Q = (H @ Wq).reshape(n, heads, d)
    Kn = (H @ Wk).reshape(n, heads, d)
    Ke = (e.reshape(n * n, -1) @ We).reshape(n, n, heads, d)
    K = Kn[None, :, :, :] + Ke
    A = attention_weights(Q, K, mask, d)
    out = np.einsum("ijh,jhd->ihd", A, Z).reshape(n, F)

    def fn(g):
        g = g.reshape(n, heads, d)
        gA = np.einsum("ihd,jhd->ijh", g, Z)
        gZ = np.einsum("ijh,ihd->jhd", A, g).reshape(n, F)
        gS = A * (gA - (A * gA).sum(axis=1, keepdims=True))
        gQ = np.einsum("ijh,ijhd->ihd", gS, K).reshape(n, F) * scale
        gK = np.einsum("ijh,ihd->ijhd", gS, Q) * scale
        gKn = gK.sum(axis=0).reshape(n, F)
        gKe = gK.reshape(n * n, F)
        gH = gZ @ Wz.T + gQ @ Wq.T + gKn @ Wk.T
        return (gH, H.T @ gZ, H.T @ gQ, H.T @ gKn, e.reshape(n * n, -1).T @ gKe)
    return T._make(out, (h, wz, wq, wk, we), fn)


class GatLayer(Module):
    """One attention layer; ``cross_in`` > 0 adds the cross-graph projection."""

    def __init__(self, n_in: int, n_out: int, edge_dim: int, heads: int,
                 rng: np.random.Generator, cross_in: int = 0):
        super().__init__()
        if n_out % heads:
            raise ValueError("heads must divide the layer width")
        self.heads = heads
        self.wz = self.add_param("w", glorot(rng, n_in, n_out))
        self.wq = self.add_param("w_q", glorot(rng, n_in, n_out))
        self.wk = self.add_param("w_k", glorot(rng, n_in, n_out))
        self.we = self.add_param("w_e", glorot(rng, edge_dim, n_out))
        self.b = self.add_param("b", np.zeros(n_out))
        self.wc = self.add_param("w_cross", glorot(rng, cross_in, n_out)) if cross_in else None

    def __call__(self, h: T.Tensor, e: np.ndarray, mask: np.ndarray,
                 cross: T.Tensor | None = None) -> T.Tensor:
        """``cross`` is the ``(1, cross_in)`` transferred service message for the self row."""
        out = attention_op(h, e, mask, self.wz, self.wq, self.wk, self.we, self.heads) + self.b
        if cross is not None and self.wc is not None:
            out = out + T.place_row(T.matmul(cross, self.wc), h.shape[0], 0)
        return T.relu(out)


class DualGat(Module):
    """Two stacked cooperation/service layer pairs plus the fusion projection."""

    def __init__(self, node_dim: int, coop_edge_dim: int, serv_edge_dim: int, hidden, heads: int,
                 out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.coop, self.serv = [], []
        n_in = node_dim
        for i, width in enumerate(hidden):
            self.coop.append(self.add_child(f"coop{i}", GatLayer(
                n_in, width, coop_edge_dim, heads, rng, cross_in=n_in)))
            self.serv.append(self.add_child(f"serv{i}", GatLayer(
                n_in, width, serv_edge_dim, heads, rng)))
            n_in = width
        self.fuse = self.add_child("fuse", Linear(2 * n_in, out_dim, rng))

    def __call__(self, g) -> T.Tensor:
        hc = T.Tensor(g.coop_x)
        hs = T.Tensor(g.serv_x)
        m_row = g.transfer[None, :]
        has_cross = bool(m_row.any())
        for i, (lc, ls) in enumerate(zip(self.coop, self.serv)):
            cross = None
            if has_cross:
                cross = T.matmul(m_row, T.getitem(hs, slice(1, None)))
            hc_new = T.check_finite(lc(hc, g.coop_e, g.coop_mask, cross), f"cooperation layer {i}")
            hs = T.check_finite(ls(hs, g.serv_e, g.serv_mask), f"service layer {i}")
            hc = hc_new
        both = T.concat([T.getitem(hc, slice(0, 1)), T.getitem(hs, slice(0, 1))], axis=1)
        return T.check_finite(self.fuse(both), "fusion")


class MlpExtractor(Module):
    """Structureless substitute for the GAT: own features plus the mean
    device features through a two-layer ReLU network."""

    def __init__(self, node_dim: int, out_dim: int, rng: np.random.Generator, hidden: int = 128):
        super().__init__()
        self.l0 = self.add_child("l0", Linear(2 * node_dim, hidden, rng))
        self.l1 = self.add_child("l1", Linear(hidden, out_dim, rng))

    def __call__(self, g) -> T.Tensor:
        dev = g.serv_x[1:]
        mean_dev = dev.mean(axis=0) if len(dev) else np.zeros(g.serv_x.shape[1])
        x = T.Tensor(np.concatenate([g.coop_x[0], mean_dev])[None, :])
        return self.l1(T.relu(self.l0(x)))
