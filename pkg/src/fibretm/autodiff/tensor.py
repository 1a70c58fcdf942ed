"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Each operation returns a new :class:`Tensor` holding references to its inputs
and a closure that maps the output gradient to input gradients.
:func:`backward` orders the recorded graph topologically and applies the
closures once each, in reverse.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np

_ids = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes violate an operator's shape rule."""


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph (used for validation and inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "id", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.op = op
        self.id = next(_ids)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self.op}, id={self.id}, shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    @property
    def T(self):
        return transpose(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data, parents, backward_fn, op) -> Tensor:
    """Create an op output; ``backward_fn(g)`` returns one gradient (or None) per parent."""
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, op=op, parents=tuple(parents), backward=backward_fn)


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that require grad, inputs before outputs."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.id not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, node {loss.id} ({loss.op}) has shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {loss.id: np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(f"gradient shape {pg.shape} != shape {parent.shape} "
                                 f"of node {parent.id} ({parent.op}) from node {node.id} ({node.op})")
            grads[parent.id] = grads[parent.id] + pg if parent.id in grads else pg


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check(cond, msg, *nodes):
    if not cond:
        ids = ", ".join(f"node {t.id} ({t.op}) {t.shape}" for t in nodes)
        raise ShapeError(f"{msg}: {ids}")


# ---------------------------------------------------------------------------
# algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., m, k) @ (..., k, n); a 2-D operand is shared across the batch."""
    _check(a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2], "matmul shape mismatch", a, b)
    out = a.data @ b.data

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make(out, (a, b), bw, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a bias matching the trailing dims of ``a``."""
    _check(a.shape == b.shape or (b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape),
           "add shape mismatch", a, b)

    def bw(g):
        return g, _unbroadcast(g, b.shape)

    return make(a.data + b.data, (a, b), bw, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, "mul shape mismatch", a, b)

    def bw(g):
        return g * b.data, g * a.data

    return make(a.data * b.data, (a, b), bw, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return make(a.data * c, (a,), lambda g: (g * c,), "scale")


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    _check(a.ndim >= 2, "transpose needs rank >= 2", a)
    return make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape node {a.id} ({a.op}) {a.shape} to {shape}") from None
    return make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return make(np.array(a.data.sum()), (a,), lambda g: (np.full(a.shape, float(g)),), "sum")


def getitem(a: Tensor, index) -> Tensor:
    """Basic slicing; the gradient scatters back into a zero array."""
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make(np.array(out), (a,), bw, "getitem")


def pad2d(a: Tensor, bottom: int, right: int) -> Tensor:
    """Zero-pad the last two axes at the high end."""
    if bottom == 0 and right == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(0, bottom), (0, right)]
    out = np.pad(a.data, widths)
    h, w = a.shape[-2:]
    return make(out, (a,), lambda g: (g[..., :h, :w],), "pad2d")


# ---------------------------------------------------------------------------
# nonlinearities


def leaky_relu(a: Tensor, slope: float = 0.3) -> Tensor:
    mask = a.data > 0
    out = np.where(mask, a.data, slope * a.data)
    return make(out, (a,), lambda g: (np.where(mask, g, slope * g),), "leaky_relu")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make(out, (a,), bw, "softmax")


# ---------------------------------------------------------------------------
# layers


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x (..., in) @ w (in, out) + b (out,)."""
    _check(w.ndim == 2 and x.shape[-1] == w.shape[0], "dense shape mismatch", x, w)
    if b is not None:
        _check(b.shape == (w.shape[1],), "dense bias shape mismatch", w, b)
    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def bw(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = None
        if w.requires_grad:
            gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return make(out, parents, bw, "dense")


def _windows(xp, k):
    # (B, C, H, W, k, k) view -> (B, H, W, C*k*k) contiguous columns
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    b, c, h, w = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, h, w, c * k * k)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution (cross-correlation); x (B, C, H, W), w (O, C, k, k), odd k."""
    _check(x.ndim == 4 and w.ndim == 4 and x.shape[1] == w.shape[1] and w.shape[2] == w.shape[3]
           and w.shape[2] % 2 == 1, "conv2d shape mismatch", x, w)
    o, c, k, _ = w.shape
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = _windows(xp, k)
    wmat = w.data.reshape(o, c * k * k)
    out = cols @ wmat.T  # (B, H, W, O)
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def bw(g):
        gt = g.transpose(0, 2, 3, 1)  # (B, H, W, O)
        gw = gb = gx = None
        if w.requires_grad:
            gw = (gt.reshape(-1, o).T @ cols.reshape(-1, c * k * k)).reshape(w.shape)
        if b is not None:
            gb = gt.reshape(-1, o).sum(axis=0)
        if x.requires_grad:
            # full correlation of the output gradient with the flipped kernel
            gp = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p)))
            gcols = _windows(gp, k)
            wflip = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, o * k * k)
            gx = np.ascontiguousarray((gcols @ wflip.T).transpose(0, 3, 1, 2))
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return make(out, parents, bw, "conv2d")


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; gradient goes to the first maximal element."""
    _check(x.ndim == 4 and x.shape[2] % 2 == 0 and x.shape[3] % 2 == 0, "maxpool2d needs even H, W", x)
    bsz, c, h, w = x.shape
    blocks = x.data.reshape(bsz, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = gb.reshape(bsz, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h, w)
        return (gx,)

    return make(out, (x,), bw, "maxpool2d")


def upsample2d(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of the last two axes."""
    _check(x.ndim == 4, "upsample2d needs rank 4", x)
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    bsz, c, h, w = x.shape

    def bw(g):
        return (g.reshape(bsz, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make(out, (x,), bw, "upsample2d")


# ---------------------------------------------------------------------------
# losses (reduced per sample: summed over elements, averaged over the leading batch axis)


def l1_mean(x: Tensor) -> Tensor:
    m = x.shape[0] if x.ndim else 1
    return make(np.array(np.abs(x.data).sum() / m), (x,), lambda g: (np.sign(x.data) * (float(g) / m),), "l1_mean")


def mse_mean(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, "mse_mean shape mismatch", a, b)
    m = a.shape[0] if a.ndim else 1
    diff = a.data - b.data

    def bw(g):
        ga = diff * (2.0 * float(g) / m)
        return ga, -ga

    return make(np.array((diff * diff).sum() / m), (a, b), bw, "mse_mean")
