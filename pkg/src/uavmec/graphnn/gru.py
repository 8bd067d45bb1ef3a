"""Gated recurrent unit.

Convention: ``h' = (1 - z) * h + z * h_cand``, so a closed update gate
(z = 0) keeps the previous state unchanged.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Module, glorot


class GRUCell(Module):
    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator):
        super().__init__()
        H = n_hidden
        self.n_hidden = H
        # input projections for [z | r | candidate] stacked column-wise
        self.wx = self.add_param("w_x", np.hstack([glorot(rng, n_in, H) for _ in range(3)]))
        self.bx = self.add_param("b_x", np.zeros(3 * H))
        self.uzr = self.add_param("u_zr", np.hstack([glorot(rng, H, H) for _ in range(2)]))
        self.uc = self.add_param("u_c", glorot(rng, H, H))

    def initial_state(self) -> T.Tensor:
        return T.Tensor(np.zeros((1, self.n_hidden)))

    def __call__(self, x: T.Tensor, h: T.Tensor) -> T.Tensor:
        H = self.n_hidden
        xp = T.linear(x, self.wx, self.bx)
        hzr = T.matmul(h, self.uzr)
        z = T.sigmoid(xp[:, :H] + hzr[:, :H])
        r = T.sigmoid(xp[:, H:2 * H] + hzr[:, H:])
        cand = T.tanh(xp[:, 2 * H:] + T.matmul(r * h, self.uc))
        return T.check_finite(h + z * (cand - h), "gru")


def gru_step(cell: GRUCell, x: T.Tensor, h: T.Tensor) -> T.Tensor:
    if x.shape[-1] != cell.wx.shape[0] or h.shape[-1] != cell.n_hidden:
        raise ValueError("GRU input or state width mismatch")
    return cell(x, h)
