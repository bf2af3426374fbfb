"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every differentiable operation returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients. The
tape is the graph itself: :func:`backward` orders it topologically from the
loss and replays the closures once each.

Arrays are NumPy ``float64`` in row-major order. Binary operations follow
NumPy broadcasting; gradients are summed back to each operand's shape.
"""
from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DegenerateMaskError, ShapeError

_grad_enabled = True
_mac_counter: list[int] | None = None
_dtype = np.float64


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def precision(dtype):
    """Build new tensors with ``dtype`` inside the block.

    Only meant for reference evaluations, e.g. finite differences in
    ``np.longdouble`` whose rounding noise sits far below float64's.
    """
    global _dtype
    prev = _dtype
    _dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _dtype = prev


@contextlib.contextmanager
def count_macs():
    """Count multiply-accumulate FLOPs (2 per MAC) issued by matmul and conv.

    Yields a one-element list whose entry holds the running count.
    """
    global _mac_counter
    prev = _mac_counter
    _mac_counter = [0]
    try:
        yield _mac_counter
    finally:
        _mac_counter = prev


def _add_macs(n: int) -> None:
    if _mac_counter is not None:
        _mac_counter[0] += int(n)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=_dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def mT(self):
        return swapaxes(self, -1, -2)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def abs(self):
        return abs_(self)

    def backward(self, params=None):
        return backward(self, params)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"shapes {a.shape} and {b.shape} are not broadcastable") from None


# ---------------------------------------------------------------- backward


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    If ``params`` is given, each listed tensor is guaranteed a gradient buffer
    (zeros when the loss does not depend on it) and the list of gradients is
    returned in the same order.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss was not produced by recorded operations on any requires_grad tensor")
    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if params is None:
        return None
    out = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        out.append(p.grad)
    return out


# ------------------------------------------------------------ elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), fn)


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def abs_(x) -> Tensor:
    x = as_tensor(x)
    s = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * s,))


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "abs": abs_}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: add, sub, mul, tanh, sigmoid, relu, abs, scale."""
    if op in _BINARY:
        return _BINARY[op](*args)
    if op in _UNARY:
        return _UNARY[op](*args)
    if op == "scale":
        return scale(*args)
    raise ValueError(f"unknown elementwise op {op!r}")


# ------------------------------------------------------------- reductions


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(y), (x,), fn)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = math.prod(x.shape[a] for a in axes)
    return scale(sum_(x, axis, keepdims), 1.0 / n)


# ------------------------------------------------------------ shape ops


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.swapaxes(a1, a2), (x,), lambda g: (g.swapaxes(a1, a2),))


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is Ellipsis or i is None for i in items)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    basic = _is_basic_index(idx)

    def fn(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[idx] += g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return _make(np.array(x.data[idx]), (x,), fn)


def permute_last(x, perm) -> Tensor:
    """Reorder the last axis: ``out[..., j] = x[..., perm[j]]``."""
    x = as_tensor(x)
    perm = np.asarray(perm, dtype=np.intp)
    if sorted(perm.tolist()) != list(range(x.shape[-1])):
        raise ShapeError(f"perm is not a permutation of {x.shape[-1]} channels")
    inv = np.argsort(perm)
    return _make(x.data[..., perm], (x,), lambda g: (g[..., inv],))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in ts]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(y, ts, fn)


# ------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """Batched matrix product ``a[..., m, k] @ b[..., k, n]`` with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        y = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul batch dims not broadcastable: {a.shape} @ {b.shape}") from None
    _add_macs(2 * y.size * a.shape[-1])

    def fn(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2)) if a.requires_grad else None
        gb = np.matmul(a.data.swapaxes(-1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _make(y, (a, b), fn)


def softmax_rows(x) -> Tensor:
    """Softmax over the last axis with max subtraction.

    Entries equal to ``-inf`` receive exactly zero weight. A row made only of
    ``-inf`` raises :class:`DegenerateMaskError`.
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax_rows needs a non-empty last axis, got {x.shape}")
    m = x.data.max(axis=-1, keepdims=True)
    if np.isneginf(m).any():
        raise DegenerateMaskError("softmax row is entirely masked (-inf)")
    e = np.exp(x.data - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), fn)


def masked_fill_neginf(x, keep) -> Tensor:
    """Replace entries where ``keep`` is False with ``-inf``."""
    x = as_tensor(x)
    keep = np.asarray(keep, dtype=bool)
    try:
        np.broadcast_shapes(keep.shape, x.shape)
    except ValueError:
        raise ShapeError(f"mask shape {keep.shape} does not broadcast to {x.shape}") from None
    y = np.where(keep, x.data, -np.inf)
    return _make(y, (x,), lambda g: (_unbroadcast(g * keep, x.shape),))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gamma`` and ``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}, {beta.shape} do not match width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data

    def fn(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(y, (x, gamma, beta), fn)


# ------------------------------------------------------------ convolution


def _group_fwd(x: np.ndarray, wk: np.ndarray, groups: int) -> np.ndarray:
    # x [..., T, Din], wk [Dout, Din/G] -> [..., T, Dout]
    if groups == 1:
        return x @ wk.T
    lead, t, din = x.shape[:-2], x.shape[-2], x.shape[-1]
    dout = wk.shape[0]
    xg = x.reshape(lead + (t, groups, din // groups)).swapaxes(-3, -2)
    wg = wk.reshape(groups, dout // groups, din // groups).transpose(0, 2, 1)
    return (xg @ wg).swapaxes(-3, -2).reshape(lead + (t, dout))


def _group_bwd_input(g: np.ndarray, wk: np.ndarray, groups: int) -> np.ndarray:
    if groups == 1:
        return g @ wk
    lead, t, dout = g.shape[:-2], g.shape[-2], g.shape[-1]
    din_g = wk.shape[1]
    gg = g.reshape(lead + (t, groups, dout // groups)).swapaxes(-3, -2)
    wg = wk.reshape(groups, dout // groups, din_g)
    return (gg @ wg).swapaxes(-3, -2).reshape(lead + (t, groups * din_g))


def _group_bwd_weight(g: np.ndarray, x: np.ndarray, groups: int) -> np.ndarray:
    dout, din = g.shape[-1], x.shape[-1]
    g2 = g.reshape(-1, dout)
    x2 = x.reshape(-1, din)
    if groups == 1:
        return g2.T @ x2
    gg = g2.reshape(-1, groups, dout // groups).transpose(1, 2, 0)
    xg = x2.reshape(-1, groups, din // groups).transpose(1, 0, 2)
    return (gg @ xg).reshape(dout, din // groups)


def dilated_causal_conv1d(h, w, dilation: int = 1, bias=None, groups: int = 1) -> Tensor:
    """Causal dilated convolution along the time axis (second to last).

    ``h`` is ``[..., P, Din]`` and ``w`` is ``[Dout, Din/groups, K]``. Tap ``k``
    reads time ``t - dilation*k``; reads before time 0 are zeros, so the
    output keeps length ``P`` and never looks ahead. With ``groups > 1`` input
    and output channels are split into consecutive equal blocks convolved
    independently.
    """
    h, w = as_tensor(h), as_tensor(w)
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if h.ndim < 2 or w.ndim != 3:
        raise ShapeError(f"conv expects h[..., P, Din] and w[Dout, Din/G, K]; got {h.shape}, {w.shape}")
    dout, din_g, k_size = w.shape
    din = h.shape[-1]
    if groups < 1 or din != din_g * groups or dout % groups:
        raise ShapeError(f"conv channel mismatch: input {h.shape} vs weight {w.shape} with groups={groups}")
    parents = [h, w]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (dout,):
            raise ShapeError(f"conv bias shape {bias.shape} != ({dout},)")
        parents.append(bias)
    p = h.shape[-2]
    lead = h.shape[:-2]
    out = np.zeros(lead + (p, dout), dtype=np.result_type(h.data, w.data))
    for k in range(k_size):
        s = dilation * k
        if s >= p:
            continue
        out[..., s:, :] += _group_fwd(h.data[..., : p - s, :], w.data[:, :, k], groups)
    if bias is not None:
        out += bias.data
    _add_macs(2 * math.prod(lead) * p * k_size * din_g * dout)

    def fn(g):
        gh = np.zeros_like(h.data) if h.requires_grad else None
        gw = np.zeros_like(w.data) if w.requires_grad else None
        for k in range(k_size):
            s = dilation * k
            if s >= p:
                continue
            gs = g[..., s:, :]
            if gh is not None:
                gh[..., : p - s, :] += _group_bwd_input(gs, w.data[:, :, k], groups)
            if gw is not None:
                gw[:, :, k] = _group_bwd_weight(gs, h.data[..., : p - s, :], groups)
        grads = [gh, gw]
        if bias is not None:
            grads.append(g.reshape(-1, dout).sum(axis=0))
        return tuple(grads)

    return _make(out, parents, fn)
