"""Parameter containers, dense layers, Adam, and a flat binary checkpoint."""

from __future__ import annotations

import math
import struct

import numpy as np

from . import tensor as T


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape or (fan_in, fan_out))


class Module:
    """Ordered tree of named parameters.

    Subclasses register leaves with :meth:`add_param` and children with
    :meth:`add_child`; the registration order is the declaration order used by
    checkpoints and by flattening for federated exchange.
    """

    def __init__(self):
        self._params: dict[str, T.Tensor] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, value) -> T.Tensor:
        p = T.param(value, name=name)
        self._params[name] = p
        return p

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = ""):
        for n, p in self._params.items():
            yield prefix + n, p
        for n, c in self._children.items():
            yield from c.named_parameters(prefix + n + ".")

    def parameters(self) -> list[T.Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_params(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.parameters()])

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([(np.zeros(p.data.size) if p.grad is None else p.grad.ravel())
                               for p in self.parameters()])

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.num_params():
            raise ValueError(f"expected {self.num_params()} values, got {vec.size}")
        i = 0
        for p in self.parameters():
            n = p.data.size
            p.data = vec[i:i + n].reshape(p.data.shape).copy()
            i += n


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.w = self.add_param("w", glorot(rng, n_in, n_out))
        self.b = self.add_param("b", np.zeros(n_out)) if bias else None

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return T.linear(x, self.w, self.b)


class MLP(Module):
    """ReLU hidden layers followed by a linear output layer."""

    def __init__(self, sizes, rng: np.random.Generator):
        super().__init__()
        self.layers = [self.add_child(f"l{i}", Linear(a, b, rng))
                       for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]

    def __call__(self, x: T.Tensor) -> T.Tensor:
        for layer in self.layers[:-1]:
            x = T.relu(layer(x))
        return self.layers[-1](x)


class Adam:
    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --- checkpoint --------------------------------------------------------------
#
# layout (little-endian):
#   b"UMCK" | u16 version | u16 0 | u32 n_tensors
#   per tensor: u16 name_len | name utf-8 | u8 ndim | u32 dim * ndim
#   then every tensor's values as float64, in the same order

CKPT_MAGIC = b"UMCK"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(module: Module, path) -> None:
    named = list(module.named_parameters())
    head = [CKPT_MAGIC, struct.pack("<HHI", CKPT_VERSION, 0, len(named))]
    for name, p in named:
        b = name.encode()
        head.append(struct.pack("<H", len(b)) + b + struct.pack("<B", p.data.ndim)
                    + struct.pack(f"<{p.data.ndim}I", *p.data.shape))
    body = [np.ascontiguousarray(p.data, dtype="<f8").tobytes() for _, p in named]
    with open(path, "wb") as fh:
        fh.write(b"".join(head + body))


def load_checkpoint(module: Module, path) -> None:
    raw = open(path, "rb").read()
    if raw[:4] != CKPT_MAGIC:
        raise CheckpointError("bad magic")
    version, _, n = struct.unpack_from("<HHI", raw, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 12
    table = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", raw, off)
        name = raw[off + 2:off + 2 + ln].decode()
        off += 2 + ln
        (nd,) = struct.unpack_from("<B", raw, off)
        shape = struct.unpack_from(f"<{nd}I", raw, off + 1)
        off += 1 + 4 * nd
        table.append((name, shape))
    named = dict(module.named_parameters())
    if [t[0] for t in table] != list(named):
        raise CheckpointError("parameter names differ from the module")
    for name, shape in table:
        p = named[name]
        if tuple(shape) != p.data.shape:
            raise CheckpointError(f"shape mismatch for {name}")
        size = int(np.prod(shape))
        p.data = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    if off != len(raw):
        raise CheckpointError("trailing bytes in checkpoint")
