"""A small tape-based reverse-mode autodiff over dense float64 numpy arrays.

Only the operations the agents need are provided. Every op returns a new
:class:`Tensor` that remembers its parents and a closure that pushes the
output gradient back to them; :func:`backward` walks that graph once in
reverse topological order. Closures hold the arrays seen in the forward
pass, so replacing a parameter's ``data`` afterwards (optimiser step,
federated averaging) does not corrupt a pending backward.

>>> w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
>>> backward(sum_(w * w))
>>> w.grad
array([ 2., -4.])
"""

from __future__ import annotations

import math

import numpy as np


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared in a forward value or gradient."""


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


_grad_enabled = True


class no_grad:
    """Context manager: ops inside record nothing (forward values only)."""

    def __enter__(self):
        global _grad_enabled
        self._prev, _grad_enabled = _grad_enabled, False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


def _make(data, parents, fn) -> Tensor:
    if not _grad_enabled or not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward_fn=fn)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def check_finite(t: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NonFiniteError(f"non-finite value produced in {where}")
    return t


# --- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; the gradient is zero where the clamp is active."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# --- reductions and shape ----------------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), fn)


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return _make(np.mean(a.data), (a,), lambda g: (np.full(a.shape, g / n),))


def getitem(a: Tensor, idx) -> Tensor:
    shape = a.shape

    def fn(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)
    return _make(a.data[idx], (a,), fn)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(parts, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def place_row(a: Tensor, n_rows: int, row: int = 0) -> Tensor:
    """Embed a ``(1, F)`` row into an otherwise-zero ``(n_rows, F)`` matrix."""
    out = np.zeros((n_rows, a.shape[1]))
    out[row] = a.data[0]
    return _make(out, (a,), lambda g: (g[row:row + 1],))


# --- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` as one node (x is ``(n, in)``, w ``(in, out)``, b ``(out,)``)."""
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is not None:
        out = out + b.data
        return _make(out, (x, w, b), lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)))
    return _make(out, (x, w), lambda g: (g @ wd.T, xd.T @ g))


# --- distributions -----------------------------------------------------------

def masked_log_softmax(logits: Tensor, mask) -> Tensor:
    """Log-probabilities of a categorical restricted to ``mask``.

    Masked entries come out as exactly 0 (not -inf) and get no gradient, so
    the output stays finite; use ``mask`` to read probabilities back.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("categorical over an empty support")
    z = np.where(mask, logits.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = np.where(mask, z - lse, 0.0)
    probs = np.where(mask, np.exp(out), 0.0)

    def fn(g):
        g = np.where(mask, g, 0.0)
        return (g - probs * g.sum(axis=-1, keepdims=True),)
    return _make(out, (logits,), fn)


LOG_2PI = math.log(2.0 * math.pi)


def gaussian_log_prob(x, mu: Tensor, log_sigma: Tensor) -> Tensor:
    """Sum over the last axis of ``log N(x; mu, exp(log_sigma)^2)``."""
    x = as_tensor(x)
    z = mul(sub(x, mu), exp(-log_sigma))
    return sum_(mul(square(z), -0.5) - log_sigma - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_sigma: Tensor) -> Tensor:
    return sum_(log_sigma + 0.5 * (1.0 + LOG_2PI), axis=-1)


# --- differentiation ---------------------------------------------------------

def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Intermediate gradients are dropped once pushed to the parents. Leaves
    keep accumulating across calls until :meth:`Tensor.zero_grad`.
    """
    if loss.data.size != 1:
        raise ValueError("backward needs a scalar loss")
    if not loss.requires_grad:
        raise RuntimeError("backward called on a value with no recorded forward graph")
    order = _topo(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {node.name or 'leaf'}")
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node.parents, node.backward_fn(g)):
            if not p.requires_grad or pg is None:
                continue
            k = id(p)
            grads[k] = pg if k not in grads else grads[k] + pg
