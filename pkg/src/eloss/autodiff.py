"""Minimal reverse-mode automatic differentiation over float64 numpy buffers.

A :class:`Tensor` wraps a dense array and records the op that produced it;
calling :func:`backward` on a scalar loss walks the tape in reverse
topological order and accumulates gradients into every tensor that
requires them.  Subgraphs that cannot reach a parameter are pruned at
construction, so data tensors cost nothing to flow through.

Supported primitives: add/sub/mul (with broadcasting), neg, scalar scale,
matmul, 2-D convolution (stride 1, zero padding), relu, sum, mean,
reshape, basic slicing, softmax cross-entropy, mean squared error, a
gradient gate for scoping, and the k-NN channel-entropy op defined in
:mod:`eloss.network`.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Dense float64 value participating in reverse-mode differentiation."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)

    def backward(self):
        backward(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _from_op(values, parents, backward_fn) -> Tensor:
    out = Tensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros(t.values.shape, dtype=np.float64)
    t.grad += g


def _sum_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape.

    ``loss`` must be a scalar.  Gradients add onto whatever is already in
    ``grad``, so successive backward passes sum their contributions.
    """
    if loss.values.shape != ():
        raise ValueError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    if not loss.requires_grad:
        return
    order = []
    visited = {id(loss)}
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                visited.add(id(p))
                stack.append((p, False))
    _accumulate(loss, np.ones((), dtype=np.float64))
    for node in reversed(order):
        # grad stays None when every path from the loss was gated off
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


# -- primitives -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_values = a.values + b.values

    def bw(g):
        _accumulate(a, _sum_to_shape(g, a.values.shape))
        _accumulate(b, _sum_to_shape(g, b.values.shape))

    return _from_op(out_values, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_values = a.values - b.values

    def bw(g):
        _accumulate(a, _sum_to_shape(g, a.values.shape))
        _accumulate(b, -_sum_to_shape(g, b.values.shape))

    return _from_op(out_values, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_values = a.values * b.values

    def bw(g):
        _accumulate(a, _sum_to_shape(g * b.values, a.values.shape))
        _accumulate(b, _sum_to_shape(g * a.values, b.values.shape))

    return _from_op(out_values, (a, b), bw)


def scale(a, c: float) -> Tensor:
    a = _lift(a)
    c = float(c)

    def bw(g):
        _accumulate(a, c * g)

    return _from_op(c * a.values, (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_values = a.values @ b.values

    def bw(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _from_op(out_values, (a, b), bw)


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.values > 0.0

    def bw(g):
        _accumulate(a, g * mask)

    return _from_op(np.where(mask, a.values, 0.0), (a,), bw)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    out_values = a.values.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.values.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.values.shape).copy())

    return _from_op(out_values, (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    if axis is None:
        count = a.values.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.values.shape[ax] for ax in axis]))
    else:
        count = a.values.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = _lift(a)

    def bw(g):
        _accumulate(a, g.reshape(a.values.shape))

    return _from_op(a.values.reshape(shape), (a,), bw)


def getitem(a, key) -> Tensor:
    a = _lift(a)

    def bw(g):
        full = np.zeros(a.values.shape, dtype=np.float64)
        full[key] = g
        _accumulate(a, full)

    return _from_op(a.values[key], (a,), bw)


def conv2d(x, w, b, padding: int = 1) -> Tensor:
    """2-D convolution, stride 1, zero padding; x (B,C,H,W), w (O,C,kh,kw)."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    bsz, c, h, wd = x.values.shape
    o, c2, kh, kw = w.values.shape
    if c != c2:
        raise ValueError(f"conv2d channel mismatch: input {c}, kernel {c2}")
    p = int(padding)
    xp = np.pad(x.values, ((0, 0), (0, 0), (p, p), (p, p)))
    ho, wo = h + 2 * p - kh + 1, wd + 2 * p - kw + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # materialize the column matrix once; the backward closure reuses it
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)
                                ).reshape(bsz * ho * wo, c * kh * kw)
    wmat = w.values.reshape(o, c * kh * kw)
    out_values = (cols @ wmat.T + b.values).reshape(bsz, ho, wo, o).transpose(0, 3, 1, 2)

    def bw(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(bsz * ho * wo, o)
        _accumulate(w, (g2.T @ cols).reshape(w.values.shape))
        _accumulate(b, g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(bsz, ho, wo, c, kh, kw)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            _accumulate(x, dxp[:, :, p:p + h, p:p + wd])

    return _from_op(out_values, (x, w, b), bw)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    logits = _lift(logits)
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    bsz = logits.values.shape[0]
    nll = -logp[np.arange(bsz), labels].mean()

    def bw(g):
        probs = np.exp(logp)
        probs[np.arange(bsz), labels] -= 1.0
        _accumulate(logits, g * probs / bsz)

    return _from_op(np.float64(nll), (logits,), bw)


def mse(pred, target) -> Tensor:
    """Mean squared error against a constant target."""
    pred = _lift(pred)
    target = np.asarray(target, dtype=np.float64)
    diff = pred.values - target

    def bw(g):
        _accumulate(pred, g * 2.0 * diff / diff.size)

    return _from_op(np.float64(np.mean(diff * diff)), (pred,), bw)


class GradientGate:
    """Backward-pass valve: gradients pass through only while ``open``."""

    __slots__ = ("open",)

    def __init__(self, open: bool = True):
        self.open = open


def gate(a, valve: GradientGate) -> Tensor:
    """Identity in the forward pass; backward flow controlled by ``valve``."""
    a = _lift(a)

    def bw(g):
        if valve.open:
            _accumulate(a, g)

    return _from_op(a.values, (a,), bw)
