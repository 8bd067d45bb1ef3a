"""Decentralised federated averaging between UAV agents.

Each UAV runs its own aggregation clock (a phase accumulator advanced by its
speed-dependent frequency); there is no global barrier. When UAV ``k``'s
phase wraps, every neighbour within FL signal range sends ``k`` a message
carrying its quantised network parameters and reputation; messages can be
lost (random drop or transfer slower than the timeout) and ``k`` averages
whatever arrived, weighted by reputation.

Wire layout of one message (little-endian, bit-exact, see ``encode``)::

    header  b"UFLM" | u16 version | u16 sender | u32 blob_count | u32 flags
    blob    u32 n_p | f64 theta_min | f64 theta_max
            | width codes (4 bits each, value b-1, high nibble first; quantised mode only)
            | value codes (b_i bits each, MSB first, zero-padded to a byte)
    trailer f64 reputation

Flag bit 0 marks quantised mode; full precision uses 32-bit codes and no
width table.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import invariants
from .radio import distance

WIRE_MAGIC = b"UFLM"
WIRE_VERSION = 1
HEADER_BYTES = 16
BOUNDS_BYTES = 16
REP_BYTES = 8
FULL_BITS = 32


# --- reputation --------------------------------------------------------------

@dataclass
class ReputationRecord:
    uav: int
    tasks_assigned: int = 0
    tasks_completed: int = 0
    fl_attempts: int = 0
    fl_successes: int = 0
    rep: float = 1.0
    rep_prev: float = 1.0


def update_reputation(r: ReputationRecord, alpha_succ: float, alpha_stab: float,
                      forgetting: float) -> ReputationRecord:
    """Blend task success and FL link stability, then smooth with ``forgetting``.

    A rate with a zero denominator counts as 1.0.
    """
    succ = r.tasks_completed / r.tasks_assigned if r.tasks_assigned > 0 else 1.0
    stab = r.fl_successes / r.fl_attempts if r.fl_attempts > 0 else 1.0
    raw = alpha_succ * succ + alpha_stab * stab
    rep = forgetting * r.rep + (1.0 - forgetting) * raw
    return replace(r, rep=min(1.0, max(0.0, rep)), rep_prev=r.rep)


# --- neighbours and schedule ------------------------------------------------

def select_fl_neighbors(k: int, world) -> list[int]:
    """Communication neighbours whose inter-UAV RSSI reaches the FL threshold."""
    r = world.radio
    pk = world.uavs[k].pos
    return [j for j in world.neighbors(k) if r.inter_rssi(pk, world.uavs[j].pos) >= r.rssi_fl]


def aggregation_frequency(v, f_base: float, alpha_mobility: float) -> float:
    if f_base <= 0:
        raise ValueError("f_base must be positive")
    return f_base * (1.0 + alpha_mobility * math.hypot(float(v[0]), float(v[1])))


# --- quantisation -----------------------------------------------------------

def bit_width_schedule(grad_magnitudes, b_min: int, b_max: int) -> np.ndarray:
    """Bits by descending-|g| rank, linearly from ``b_max`` (rank 1) to ``b_min``.

    Ties keep parameter-index order. Integer arithmetic keeps the floor exact.
    """
    g = np.abs(np.asarray(grad_magnitudes, dtype=float))
    n = g.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 1:
        return np.array([b_max], dtype=np.int64)
    order = np.argsort(-g, kind="stable")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(1, n + 1)
    return b_min + ((n - rank) * (b_max - b_min)) // (n - 1)


@dataclass
class QuantizedBlob:
    codes: np.ndarray  # uint64 integer codes
    bits: np.ndarray  # per-parameter widths
    theta_min: float
    theta_max: float
    collapsed: bool = False

    @property
    def n_p(self) -> int:
        return int(self.codes.size)


def quantize(params, bits) -> QuantizedBlob:
    theta = np.asarray(params, dtype=float).ravel()
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if theta.shape != bits.shape:
        raise ValueError("one bit width per parameter is required")
    if not np.all(np.isfinite(theta)):
        raise ValueError("cannot quantise non-finite parameters")
    if theta.size == 0:
        return QuantizedBlob(np.zeros(0, np.uint64), bits, 0.0, 0.0, True)
    lo, hi = float(theta.min()), float(theta.max())
    levels = (np.uint64(1) << bits.astype(np.uint64)) - np.uint64(1)
    if hi == lo:
        return QuantizedBlob(np.zeros(theta.size, np.uint64), bits, lo, hi, True)
    codes = np.rint((theta - lo) / (hi - lo) * levels.astype(float)).astype(np.uint64)
    return QuantizedBlob(np.minimum(codes, levels), bits, lo, hi, False)


def dequantize(blob: QuantizedBlob) -> np.ndarray:
    if blob.collapsed or blob.theta_max == blob.theta_min:
        return np.full(blob.n_p, blob.theta_min)
    levels = ((np.uint64(1) << blob.bits.astype(np.uint64)) - np.uint64(1)).astype(float)
    return blob.theta_min + blob.codes.astype(float) / levels * (blob.theta_max - blob.theta_min)


# --- messages and byte accounting ------------------------------------------

@dataclass
class FlMessage:
    sender: int
    blobs: list  # [(network name, QuantizedBlob)]
    rep: float
    quantized: bool = True

    @property
    def payload_bytes(self) -> int:
        return comm_cost(self)


def comm_cost(msg: FlMessage) -> int:
    """Bytes charged for one message.

    Per blob: packed value bits rounded up to a byte, a 4-bit width per
    parameter (quantised mode only) and the two range bounds; plus the
    reputation and the header.
    """
    total = HEADER_BYTES + REP_BYTES
    for _, b in msg.blobs:
        total += math.ceil(int(b.bits.sum()) / 8) + BOUNDS_BYTES
        if msg.quantized:
            total += math.ceil(4 * b.n_p / 8)
    return total


def wire_size(msg: FlMessage) -> int:
    """Length of :func:`encode`'s output: the charged bytes plus a 4-byte count per blob."""
    return comm_cost(msg) + 4 * len(msg.blobs)


def _pack_codes(codes: np.ndarray, bits: np.ndarray) -> bytes:
    if codes.size == 0:
        return b""
    width = int(bits.max())
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    mat = ((codes[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
    keep = np.arange(width)[None, :] >= (width - bits)[:, None]
    return np.packbits(mat[keep]).tobytes()


def _unpack_codes(raw: bytes, bits: np.ndarray) -> np.ndarray:
    n = bits.size
    if n == 0:
        return np.zeros(0, np.uint64)
    stream = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    width = int(bits.max())
    start = np.concatenate([[0], np.cumsum(bits)[:-1]])
    j = np.arange(width)
    valid = j[None, :] < bits[:, None]
    idx = np.where(valid, start[:, None] + j[None, :], 0)
    weight = np.where(valid, np.left_shift(np.uint64(1), (bits[:, None] - 1 - j[None, :]).clip(0).astype(np.uint64)),
                      np.uint64(0))
    return (stream[idx].astype(np.uint64) * weight).sum(axis=1).astype(np.uint64)


def encode(msg: FlMessage) -> bytes:
    out = [WIRE_MAGIC, struct.pack("<HHII", WIRE_VERSION, msg.sender, len(msg.blobs), int(msg.quantized))]
    for _, b in msg.blobs:
        out.append(struct.pack("<Idd", b.n_p, b.theta_min, b.theta_max))
        if msg.quantized:
            nib = (b.bits - 1).astype(np.uint8)
            if nib.size % 2:
                nib = np.append(nib, np.uint8(0))
            out.append(((nib[0::2] << 4) | nib[1::2]).astype(np.uint8).tobytes())
        out.append(_pack_codes(b.codes, b.bits))
    out.append(struct.pack("<d", msg.rep))
    return b"".join(out)


def decode(raw: bytes, names=None) -> FlMessage:
    if raw[:4] != WIRE_MAGIC:
        raise ValueError("not an FL message")
    version, sender, count, flags = struct.unpack_from("<HHII", raw, 4)
    if version != WIRE_VERSION:
        raise ValueError(f"unsupported FL message version {version}")
    quantized = bool(flags & 1)
    off = HEADER_BYTES
    blobs = []
    for i in range(count):
        n_p, lo, hi = struct.unpack_from("<Idd", raw, off)
        off += 20
        if quantized:
            nb = math.ceil(n_p / 2)
            packed = np.frombuffer(raw, dtype=np.uint8, count=nb, offset=off)
            off += nb
            nib = np.empty(2 * nb, dtype=np.int64)
            nib[0::2], nib[1::2] = packed >> 4, packed & 0x0F
            bits = nib[:n_p] + 1
        else:
            bits = np.full(n_p, FULL_BITS, dtype=np.int64)
        nbytes = math.ceil(int(bits.sum()) / 8)
        codes = _unpack_codes(raw[off:off + nbytes], bits)
        off += nbytes
        name = names[i] if names else f"blob{i}"
        blobs.append((name, QuantizedBlob(codes, bits, lo, hi, lo == hi)))
    (rep,) = struct.unpack_from("<d", raw, off)
    if off + 8 != len(raw):
        raise ValueError("trailing bytes in FL message")
    return FlMessage(sender, blobs, rep, quantized)


def make_message(sender: int, networks: dict, grads: dict, rep: float, fc) -> FlMessage:
    """Quantise each named flat parameter vector (``networks``) using the
    matching gradient magnitudes for the bit ranking."""
    blobs = []
    for name, vec in networks.items():
        if fc.quantize:
            bits = bit_width_schedule(grads[name], fc.b_min, fc.b_max)
        else:
            bits = np.full(vec.size, FULL_BITS, dtype=np.int64)
        blobs.append((name, quantize(vec, bits)))
    return FlMessage(sender, blobs, rep, fc.quantize)


# --- aggregation -------------------------------------------------------------

def aggregation_weights(own_rep: float, reps) -> np.ndarray:
    w = np.array([own_rep] + list(reps), dtype=float)
    s = w.sum()
    w = np.full(w.size, 1.0 / w.size) if s <= 0 else w / s
    invariants.check("aggregation_weights", abs(w.sum() - 1.0) <= 1e-12)
    return w


def aggregate(local, received, own_rep: float):
    """Reputation-weighted mean of ``local`` and every received ``(params, rep)``.

    Returns ``(new_params, weights)`` with self first in ``weights``.
    """
    local = np.asarray(local, dtype=float)
    w = aggregation_weights(own_rep, [rep for _, rep in received])
    out = w[0] * local
    for wj, (params, _) in zip(w[1:], received):
        out = out + wj * np.asarray(params, dtype=float)
    return out, w


# --- asynchronous rounds -----------------------------------------------------

@dataclass
class RoundLog:
    time: float
    receiver: int
    senders: list
    delivered: list
    bytes: int
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))


class FedCoordinator:
    """Drives every agent's FL clock against the world clock."""

    def __init__(self, cfg, agents, rng: np.random.Generator):
        self.cfg = cfg
        self.fc = cfg.fed
        self.agents = agents
        self.rng = rng
        self.reps = [ReputationRecord(k) for k in range(len(agents))]
        self.phase = np.zeros(len(agents))
        self.bytes_sent = np.zeros(len(agents))
        self.log: list[RoundLog] = []
        self.weight_sums: list[float] = []

    def networks(self) -> tuple[str, ...]:
        base = ("vel", "off", "critic")
        return base + ("features",) if self.fc.aggregate_features else base

    def reset_episode(self) -> None:
        self.bytes_sent[:] = 0.0
        for r in self.reps:
            r.tasks_assigned = r.tasks_completed = 0

    def refresh_reputations(self, world) -> None:
        for k, r in enumerate(self.reps):
            r.tasks_assigned = int(world.assigned[k])
            r.tasks_completed = int(world.completed_ok[k])
            self.reps[k] = update_reputation(r, self.fc.alpha_succ, self.fc.alpha_stab, self.fc.forgetting)

    def rep(self, k: int) -> float:
        return self.reps[k].rep if self.fc.reputation else 1.0

    def message_from(self, j: int) -> FlMessage:
        ag = self.agents[j]
        nets = {n: ag.params.group(n).flat() for n in self.networks()}
        return make_message(j, nets, ag.last_grads, self.rep(j), self.fc)

    def step(self, world) -> list[RoundLog]:
        """Advance every active UAV's FL clock by one world step; run due rounds."""
        self.refresh_reputations(world)
        if not self.fc.enabled:
            return []
        rounds = []
        for k, u in enumerate(world.uavs):
            if not u.active:
                continue
            self.phase[k] += aggregation_frequency(u.vel, self.fc.f_base, self.fc.alpha_mobility) * self.cfg.dt
            if self.phase[k] >= 1.0:
                self.phase[k] -= 1.0
                rounds.append(self.run_round(world, k))
        return rounds

    def run_round(self, world, k: int) -> RoundLog:
        senders = select_fl_neighbors(k, world)
        received, delivered, nbytes = [], [], 0
        for j in senders:
            msg = self.message_from(j)
            size = comm_cost(msg)
            nbytes += size
            self.bytes_sent[j] += size
            rate = world.radio.inter_rate(world.uavs[j].pos, world.uavs[k].pos)
            t_tx = 8.0 * size / rate
            if self.fc.debit_energy:
                world.debit(j, "forward", world.cfg.radio.p_tx_uav * t_tx)
                world.debit(k, "forward", world.cfg.radio.p_rx_uav * t_tx)
            self.reps[j].fl_attempts += 1
            lost = self.rng.random() < self.fc.drop_prob or t_tx > self.cfg.fl_timeout
            lost = lost or distance(world.uavs[j].pos, world.uavs[k].pos) > world.cfg.radio.r_comm
            if lost:
                continue
            self.reps[j].fl_successes += 1
            delivered.append(j)
            received.append({name: dequantize(b) for name, b in msg.blobs})
        log = RoundLog(world.clock, k, senders, delivered, nbytes)
        if received:
            ag = self.agents[k]
            reps = [self.rep(j) for j in delivered]
            for name in self.networks():
                grp = ag.params.group(name)
                new, w = aggregate(grp.flat(), [(r[name], rep) for r, rep in zip(received, reps)], self.rep(k))
                grp.load_flat(new)
            log.weights = w
            self.weight_sums.append(float(w.sum()))
        self.log.append(log)
        return log
