"""Per-UAV actor-critic agent.

Each agent owns a feature extractor (graph attention or the MLP substitute), a
GRU, a shared ReLU layer and three heads: a Gaussian velocity actor, a masked
categorical offloading actor and a scalar critic. Learning is on-policy:
acting stores a window of inputs and samples, which is replayed with
gradients on for one step per network and then cleared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphnn import tensor as T
from .graphnn.gat import DualGat, MlpExtractor
from .graphnn.graph import COOP_EDGE_DIM, NODE_DIM, SERV_EDGE_DIM
from .graphnn.gru import GRUCell
from .graphnn.nn import MLP, Adam, Linear, Module
from .sim import adaptive_update_interval

NETWORKS = ("vel", "off", "critic", "features")


class ExhaustedActions(RuntimeError):
    """Every offloading slot is masked."""


@dataclass
class RewardBreakdown:
    performance: float = 0.0
    deadline: float = 0.0
    coverage: float = 0.0

    @property
    def total(self) -> float:
        return self.performance + self.deadline + self.coverage


def reward(k: int, res, lc, time_scale: float, energy_scale: float) -> RewardBreakdown:
    """Per-UAV reward from one step's outcome.

    performance: minus the weighted time cost of tasks this UAV served (first
    hop) that completed this step and its own energy increment;
    deadline: minus ``deadline_penalty`` times the summed overshoot;
    coverage: ``coverage_weight`` times the number of devices it covers.
    """
    perf = -(lc.alpha_time * res.served_time[k] / time_scale
             + lc.beta_energy * res.energy[k] / energy_scale)
    return RewardBreakdown(perf, -lc.deadline_penalty * res.overshoot[k],
                           lc.coverage_weight * res.coverage[k])


def advantage(r: float, v: float, v_next: float, gamma: float, done: bool = False) -> float:
    """One-step TD advantage ``r + gamma * V(t+1) - V(t)``; ``V(t+1) = 0`` at the end."""
    return r + (0.0 if done else gamma * v_next) - v


class PolicyParams(Module):
    """All trainable pieces of one agent, grouped by network."""

    def __init__(self, n_slots: int, lc, rng: np.random.Generator):
        super().__init__()
        if lc.features == "gat":
            feat = DualGat(NODE_DIM, COOP_EDGE_DIM, SERV_EDGE_DIM, lc.gat_hidden, lc.gat_heads,
                           lc.spatial_dim, rng)
        else:
            feat = MlpExtractor(NODE_DIM, lc.spatial_dim, rng)
        self.features = self.add_child("features", _Trunk(feat, lc, rng))
        self.vel = self.add_child("vel", MLP((lc.shared_dim,) + tuple(lc.actor_hidden) + (4,), rng))
        self.off = self.add_child("off", MLP((lc.shared_dim,) + tuple(lc.actor_hidden) + (n_slots,), rng))
        self.critic = self.add_child("critic", MLP((lc.shared_dim,) + tuple(lc.critic_hidden) + (1,), rng))
        # near-zero initial outputs: start close to hovering with unit spread
        for head in (self.vel, self.off):
            head.layers[-1].w.data *= 0.01

    def group(self, name: str) -> Module:
        return getattr(self, name)


class _Trunk(Module):
    def __init__(self, extractor, lc, rng):
        super().__init__()
        self.extractor = self.add_child("extractor", extractor)
        self.gru = self.add_child("gru", GRUCell(lc.spatial_dim, lc.gru_hidden, rng))
        self.shared = self.add_child("shared", Linear(lc.gru_hidden, lc.shared_dim, rng))


def shared_features(layer: Linear, h: T.Tensor) -> T.Tensor:
    return T.relu(layer(h))


def velocity_head(out: T.Tensor, v_max: float, sigma_min: float):
    """Split the 4-wide head output into ``(mu, log_sigma)``."""
    mu = T.tanh(out[:, :2]) * v_max
    log_sigma = T.clip(out[:, 2:], math.log(sigma_min), math.log(v_max))
    return mu, log_sigma


def act_velocity(params: PolicyParams, f: T.Tensor, rng: np.random.Generator, v_max: float,
                 sigma_min: float = 1e-3):
    """Sample a velocity; the log-probability is taken at the unclipped sample."""
    mu, log_sigma = velocity_head(params.vel(f), v_max, sigma_min)
    a = mu.data + np.exp(log_sigma.data) * rng.standard_normal(mu.shape)
    return a[0], T.gaussian_log_prob(a, mu, log_sigma), T.gaussian_entropy(log_sigma)


def act_offload(logits: T.Tensor, mask, rng: np.random.Generator):
    """Sample a slot from the masked softmax; returns ``(slot, logprob, entropy)``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ExhaustedActions("no feasible offloading slot")
    logp = T.masked_log_softmax(logits, mask[None, :])
    p = np.where(mask, np.exp(logp.data[0]), 0.0)
    slot = int(rng.choice(len(p), p=p / p.sum()))
    ent = -T.sum_(T.mul(T.exp(logp) * mask[None, :], logp))
    return slot, logp[0, slot], ent


def critic_loss(V: T.Tensor, rewards, dones, v_last: float, gamma: float):
    """Mean squared TD error of a window of values ``V`` (``(n, 1)``).

    Targets ``r_t + gamma V(t+1)`` are built from ``V``'s values as
    constants, so no gradient flows through the next-state value. Returns
    ``(loss, advantages)``.
    """
    v = V.data[:, 0]
    v_next = np.append(v[1:], v_last)
    target = np.asarray(rewards, dtype=float) + np.where(dones, 0.0, gamma * v_next)
    return T.mean(T.square(V - target[:, None])), target - v


@dataclass
class Step:
    """What acting stored for one step; the update recomputes the forward pass."""

    graph: object  # LocalGraph when the spatial embedding was refreshed, else None
    x: np.ndarray  # spatial embedding used (constant fallback at window start)
    action: np.ndarray  # unclipped velocity sample
    decisions: list = field(default_factory=list)  # (mask, slot) with >1 feasible slot
    reward: float = 0.0
    done: bool = False


class Agent:
    """One UAV's learner; drive it with :meth:`act`, :meth:`record`, :meth:`update`.

    Acting runs the networks without recording a tape. :meth:`update`
    replays the window from its stored inputs (graphs, actions, offloading
    masks) with gradients on: the extractor and GRU step by step, the shared
    layer, actors and critic batched over the window.
    """

    def __init__(self, k: int, cfg, rng: np.random.Generator, init_rng: np.random.Generator):
        self.k = k
        self.cfg = cfg
        self.lc = lc = cfg.learn
        self.rng = rng
        self.params = PolicyParams(cfg.n_uavs, lc, init_rng)
        lrs = {"vel": lc.lr_vel, "off": lc.lr_off, "critic": lc.lr_critic, "features": lc.lr_features}
        self.opt = {n: Adam(self.params.group(n).parameters(), lrs[n]) for n in NETWORKS}
        self.last_grads = {n: np.zeros(self.params.group(n).num_params()) for n in NETWORKS}
        self.buffer: list[Step] = []
        self.frozen = False
        self.reset_episode()

    def reset_episode(self) -> None:
        self.h = np.zeros((1, self.lc.gru_hidden))
        self.h0 = self.h.copy()
        self.x = None
        self.next_refresh = -math.inf
        self.buffer = []
        self.current: Step | None = None
        self._f = None
        self._logits = None

    # --- acting -------------------------------------------------------------
    def _forward(self, graph_fn, clock: float, vel, h: np.ndarray):
        """No-tape trunk pass; returns (graph or None, x, h_new, f)."""
        p = self.params.features
        g = None
        x = self.x
        if x is None or clock >= self.next_refresh - 1e-9:
            g = graph_fn()
            x = p.extractor(g).data
        h_new = p.gru(T.Tensor(x), T.Tensor(h))
        f = shared_features(p.shared, h_new)
        return g, x, h_new.data, f

    def act(self, graph_fn, clock: float, vel):
        """Choose this step's velocity; returns ``(velocity, offload_callback)``.

        ``graph_fn`` builds this UAV's local graph on demand (only when the
        cached spatial embedding is due for a refresh).
        """
        with T.no_grad():
            g, x, self.h, f = self._forward(graph_fn, clock, vel, self.h)
            mu, log_sigma = velocity_head(self.params.vel(f), self.cfg.v_max, self.lc.sigma_min)
        if g is not None:
            self.x = x
            self.next_refresh = clock + adaptive_update_interval(vel, self.cfg.dt_base, self.cfg.alpha_speed)
        a = mu.data[0] + np.exp(log_sigma.data[0]) * self.rng.standard_normal(2)
        self._f, self._logits = f, None
        self.current = Step(g, x, a)
        return (float(a[0]), float(a[1])), self.offload

    def offload(self, k: int, task, mask) -> int:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ExhaustedActions("no feasible offloading slot")
        feasible = np.flatnonzero(mask)
        if len(feasible) == 1:
            # a forced choice carries no policy gradient
            return int(feasible[0])
        if self._logits is None:
            with T.no_grad():
                self._logits = self.params.off(self._f).data[0]
        z = np.where(mask, self._logits, -np.inf)
        p = np.exp(z - z.max())
        slot = int(self.rng.choice(len(p), p=p / p.sum()))
        self.current.decisions.append((mask.copy(), slot))
        return slot

    def value_of(self, graph_fn, clock: float, vel) -> float:
        """Critic value of the next state without advancing the agent."""
        with T.no_grad():
            saved = self.x, self.next_refresh
            _, _, _, f = self._forward(graph_fn, clock, vel, self.h)
            self.x, self.next_refresh = saved
            return self.params.critic(f).item()

    def record(self, r: float, done: bool = False) -> None:
        self.current.reward = r
        self.current.done = done
        if not self.frozen:
            self.buffer.append(self.current)
        else:
            self.h0 = self.h
        self.current = None

    # --- learning -----------------------------------------------------------
    def replay(self):
        """Recompute the window on the tape: ``(F, V, mu, log_sigma)`` batched over steps."""
        p = self.params.features
        h = T.Tensor(self.h0)
        x = None
        hs = []
        for s in self.buffer:
            if s.graph is not None:
                x = p.extractor(s.graph)
            elif x is None:
                x = T.Tensor(s.x)
            h = p.gru(x, h)
            hs.append(h)
        F = shared_features(p.shared, T.concat(hs, axis=0))
        mu, log_sigma = velocity_head(self.params.vel(F), self.cfg.v_max, self.lc.sigma_min)
        return F, self.params.critic(F), mu, log_sigma

    def losses(self, v_last: float):
        """Build the window's loss on the tape (no parameter change)."""
        lc = self.lc
        steps = self.buffer
        n = len(steps)
        F, V, mu, log_sigma = self.replay()
        r = np.array([s.reward for s in steps])
        done = np.array([s.done for s in steps])
        l_critic, adv = critic_loss(V, r, done, v_last, lc.gamma)
        a_norm = adv
        if lc.normalize_advantage and n > 1:
            a_norm = (adv - adv.mean()) / (adv.std() + 1e-8)
        actions = np.array([s.action for s in steps])
        logp_vel = T.gaussian_log_prob(actions, mu, log_sigma)
        l_vel = T.mul(T.sum_(T.mul(logp_vel, a_norm)), -1.0 / n)
        h_vel = T.mean(T.gaussian_entropy(log_sigma))
        rows = [i for i, s in enumerate(steps) for _ in s.decisions]
        if rows:
            masks = np.array([m for s in steps for m, _ in s.decisions])
            slots = np.array([a for s in steps for _, a in s.decisions])
            logp = T.masked_log_softmax(self.params.off(T.getitem(F, np.array(rows))), masks)
            chosen = T.getitem(logp, (np.arange(len(rows)), slots))
            n_steps_off = len(set(rows))
            l_off = T.mul(T.sum_(T.mul(chosen, a_norm[rows])), -1.0 / n_steps_off)
            ent = T.sum_(T.mul(T.exp(logp) * masks, logp))
            h_off = T.mul(ent, -1.0 / len(rows))
        else:
            l_off = h_off = T.Tensor(0.0)
        total = l_vel + l_off + l_critic - lc.entropy_coef * (h_off + h_vel)
        return total, {"vel": l_vel.item(), "off": l_off.item(), "critic": l_critic.item(),
                       "entropy_vel": h_vel.item(), "entropy_off": h_off.item(),
                       "advantage": float(adv.mean())}

    def update(self, v_last: float = 0.0) -> dict:
        """One gradient step per network on the current window, then clear it."""
        if not self.buffer:
            return {}
        total, report = self.losses(v_last)
        self.params.zero_grad()
        T.backward(total)
        for name in NETWORKS:
            self.last_grads[name] = self.params.group(name).flat_grad()
            self.opt[name].step()
        self.buffer = []
        self.h0 = self.h.copy()
        return report
