"""Dense-tensor math with reverse-mode differentiation.

A Tensor wraps a numpy array plus an optional gradient and a backward
closure; backward() walks the recorded graph in reverse topological order.
Compute dtype follows the input arrays: float32 is the training default,
float64 is used by the gradient checker.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, DomainError, NumericError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-d array with optional grad. Values are immutable once written by an op."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={'set' if self.grad is not None else 'none'})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.ndim != 0:
            raise ContractError(f"backward requires a scalar tensor, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones((), dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar used by tests and small expressions
    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(other, dtype=self.dtype))

    def __mul__(self, other):
        return mul(self, other if isinstance(other, Tensor) else Tensor(other, dtype=self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def parameter(data, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    out = a.data * c

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * c)

    return _make(out, (a,), backward)


def add_const(a: Tensor, arr: np.ndarray) -> Tensor:
    """Add a non-differentiable constant (e.g. an attention mask)."""
    out = a.data + np.asarray(arr, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))

    return _make(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ContractError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _make(out, (a, b), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _make(out, (a,), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    out = a.data.swapaxes(ax1, ax2)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.swapaxes(ax1, ax2))

    return _make(out, (a,), backward)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    out = a.data[..., start:stop]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[..., start:stop] = g
            a._accumulate(full)

    return _make(out, (a,), backward)


def concat_last(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(parts)
    out = np.concatenate([p.data for p in parts], axis=-1)

    def backward(g):
        off = 0
        for p in parts:
            width = p.data.shape[-1]
            if p.requires_grad:
                p._accumulate(g[..., off:off + width])
            off += width

    return _make(out, parts, backward)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(x.dtype.type(2.0))))
    out = x * cdf

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * x * x) / np.sqrt(x.dtype.type(2.0 * math.pi))
            a._accumulate(g * (cdf + x * pdf))

    return _make(out, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = (x - mu) * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        if bias.requires_grad:
            bias._accumulate(_unbroadcast(g, bias.data.shape))
        if gain.requires_grad:
            gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
        if a.requires_grad:
            dxhat = g * gain.data
            term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            a._accumulate(inv * term)

    return _make(out, (a, gain, bias), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            a._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _make(s, (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise DomainError("embedding id out of range")
    out = table.data[ids]

    def backward(g):
        if table.requires_grad:
            gw = np.zeros_like(table.data)
            np.add.at(gw, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
            table._accumulate(gw)

    return _make(out, (table,), backward)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows of a 2-d tensor (used to pick out masked-LM positions)."""
    idx = np.asarray(idx)
    out = a.data[idx]

    def backward(g):
        if a.requires_grad:
            gx = np.zeros_like(a.data)
            np.add.at(gx, idx, g)
            a._accumulate(gx)

    return _make(out, (a,), backward)


def last_token(a: Tensor, lengths: np.ndarray) -> Tensor:
    """Pool h[b, lengths[b]-1, :] from a (B, T, d) tensor."""
    lengths = np.asarray(lengths)
    if lengths.size == 0 or lengths.min() < 1:
        raise ContractError("last_token requires every sequence length >= 1")
    if lengths.max() > a.data.shape[1]:
        raise ContractError("sequence length exceeds tensor time dimension")
    rows = np.arange(a.data.shape[0])
    cols = lengths - 1
    out = a.data[rows, cols]

    def backward(g):
        if a.requires_grad:
            gx = np.zeros_like(a.data)
            gx[rows, cols] = g
            a._accumulate(gx)

    return _make(out, (a,), backward)


def tsum(a: Tensor) -> Tensor:
    out = a.data.sum()

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.data.shape))

    return _make(out, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out = a.data.mean()

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g / a.data.dtype.type(n), a.data.shape))

    return _make(out, (a,), backward)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target]."""
    x = logits.data
    if x.ndim != 2:
        raise ContractError(f"cross_entropy expects 2-d logits, got shape {logits.shape}")
    targets = np.asarray(targets)
    n, c = x.shape
    if n < 1:
        raise ContractError("cross_entropy requires at least one row")
    if targets.shape != (n,):
        raise ContractError(f"targets shape {targets.shape} does not match batch {n}")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise DomainError("cross_entropy target out of range")
    if not np.isfinite(x).all():
        raise NumericError("cross_entropy received non-finite logits")
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    z = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(z[:, 0])
    losses = lse - x[np.arange(n), targets]
    out = losses.mean()

    def backward(g):
        if logits.requires_grad:
            p = e / z
            p[np.arange(n), targets] -= 1.0
            logits._accumulate(p * (g / x.dtype.type(n)))

    return _make(np.asarray(out, dtype=x.dtype), (logits,), backward)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    probe = Tensor(x.data.astype(np.float64), requires_grad=True)
    y = f(probe)
    if not np.isfinite(y.data).all():
        raise NumericError("function value is non-finite at x")
    y.backward()
    analytic = probe.grad.copy() if probe.grad is not None else np.zeros_like(probe.data)

    fd = np.zeros_like(probe.data)
    flat = probe.data.reshape(-1)
    fd_flat = fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        with no_grad():
            hi = float(f(Tensor(probe.data)).data)
        flat[i] = orig - eps
        with no_grad():
            lo = float(f(Tensor(probe.data)).data)
        flat[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NumericError("function value is non-finite at perturbed x")
        fd_flat[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float((np.abs(analytic - fd) / denom).max())
