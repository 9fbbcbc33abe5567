"""A small reverse-mode autodiff engine for the VQ-VAE.

Tensors hold float64 numpy arrays. Every operator records its parents and a
backward closure; :meth:`Tensor.backward` walks the graph in reverse
topological order and accumulates gradients into leaf tensors that require
them. The operator set is fixed to what the model needs: convolutions,
nearest-neighbour upsampling, ReLU, affine maps, elementwise arithmetic,
reductions, row gathering and ``stop_gradient``.

Images are laid out ``(N, C, H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self._parents

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


class Parameter(Tensor):
    """A named trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True, name=name)
        self.zero_grad()


def _make(data, parents, backward):
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


def constant(data):
    return Tensor(data)


# --------------------------------------------------------------------------
# elementwise and reductions


def add(a, b):
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    if a.shape != b.shape:
        raise ValueError(f"sub: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a, c):
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def square(a):
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def relu(a):
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tsum(a, axis=None):
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(out, (a,), backward)


def mean(a):
    n = a.data.size
    return _make(a.data.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def stop_gradient(a):
    """Identity forward; upstream receives nothing on the way back."""
    return Tensor(a.data)


def mse(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"mse: shape mismatch {pred.shape} vs {target.shape}")
    return mean(square(sub(pred, target)))


def gather_rows(table, indices, zero_rows=None):
    """``table[indices]`` with a scatter-add backward.

    Rows flagged in ``zero_rows`` read as exact zeros and receive no gradient.
    """
    indices = np.asarray(indices, dtype=np.int64)
    live = np.ones(table.shape[0], dtype=bool) if zero_rows is None else ~np.asarray(zero_rows)
    out = table.data[indices] * live[indices, None]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, indices, g * live[indices, None])
        return (gt,)

    return _make(out, (table,), backward)


def affine(x, weight, bias):
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        flat_g = g.reshape(-1, g.shape[-1])
        flat_x = x.data.reshape(-1, x.shape[-1])
        return (g @ weight.data, flat_g.T @ flat_x, flat_g.sum(axis=0))

    return _make(out, (x, weight, bias), backward)


# --------------------------------------------------------------------------
# convolutions


def _windows(xp, kh, kw, stride):
    # (N, C, Ho, Wo, kh, kw) view
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _col2im(cols, padded_shape, stride):
    """Scatter-add ``(N, C, Ho, Wo, kh, kw)`` patches into a padded image."""
    n, c, ho, wo, kh, kw = cols.shape
    out = np.zeros(padded_shape)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                :, :, :, :, i, j
            ]
    return out


PAD_MODES = ("zeros", "edge")


def _pad(x, p, mode="zeros"):
    if p == 0:
        return x
    width = ((0, 0), (0, 0), (p, p), (p, p))
    return np.pad(x, width, mode="edge") if mode == "edge" else np.pad(x, width)


def _unpad(x, p, mode="zeros"):
    """Adjoint of :func:`_pad`: crop, folding replicated borders back for ``edge``."""
    if p == 0:
        return x
    if mode == "edge":
        x = x.copy()
        x[:, :, p, :] += x[:, :, :p, :].sum(axis=2)
        x[:, :, -p - 1, :] += x[:, :, -p:, :].sum(axis=2)
        x[:, :, :, p] += x[:, :, :, :p].sum(axis=3)
        x[:, :, :, -p - 1] += x[:, :, :, -p:].sum(axis=3)
    return x[:, :, p:-p, p:-p]


def _conv_forward(x, w, stride, padding, pad_mode="zeros"):
    kh, kw = w.shape[2:]
    win = _windows(_pad(x, padding, pad_mode), kh, kw, stride)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, O)
    return out.transpose(0, 3, 1, 2), win


def _conv_input_grad(g, w, x_shape, stride, padding, pad_mode="zeros"):
    n, c, h, wd = x_shape
    cols = np.tensordot(g, w, axes=([1], [0]))  # (N, Ho, Wo, C, kh, kw)
    cols = cols.transpose(0, 3, 1, 2, 4, 5)
    padded = (n, c, h + 2 * padding, wd + 2 * padding)
    return _unpad(_col2im(cols, padded, stride), padding, pad_mode)


def conv2d(x, weight, bias, stride=1, padding=0, pad_mode="zeros"):
    """Cross-correlation of ``(N, C, H, W)`` input with ``(O, C, kh, kw)`` weights.

    ``pad_mode`` is ``"zeros"`` or ``"edge"`` (replicate the border pixels).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if pad_mode not in PAD_MODES:
        raise ValueError(f"pad_mode must be one of {PAD_MODES}")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects 4-d input and weights")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d: input has {x.shape[1]} channels, weights expect {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ValueError("conv2d: bias must have one entry per output channel")
    kh, kw = weight.shape[2:]
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise ValueError("conv2d: kernel larger than padded input")
    out, win = _conv_forward(x.data, weight.data, stride, padding, pad_mode)
    out = out + bias.data[None, :, None, None]

    def backward(g):
        gx = _conv_input_grad(g, weight.data, x.shape, stride, padding, pad_mode)
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    return _make(out, (x, weight, bias), backward)


def conv_transpose2d(x, weight, bias, stride=1, padding=0):
    """Transposed convolution; ``weight`` is ``(C_in, C_out, kh, kw)``.

    This is the adjoint of :func:`conv2d` with the same weight tensor, so the
    output side is ``(H - 1) * stride - 2 * padding + kh``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if x.shape[1] != weight.shape[0]:
        raise ValueError(
            f"conv_transpose2d: input has {x.shape[1]} channels, weights expect {weight.shape[0]}"
        )
    n, _, h, wd = x.shape
    cout, kh, kw = weight.shape[1:]
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (wd - 1) * stride - 2 * padding + kw
    if ho < 1 or wo < 1:
        raise ValueError("conv_transpose2d: padding too large for input")
    out = _conv_input_grad(x.data, weight.data, (n, cout, ho, wo), stride, padding)
    out = out + bias.data[None, :, None, None]

    def backward(g):
        gx, win = _conv_forward(g, weight.data, stride, padding)
        gw = np.tensordot(x.data, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    return _make(out, (x, weight, bias), backward)


def upsample_nearest(x, factor):
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    if factor == 1:
        return _make(x.data.copy(), (x,), lambda g: (g,))
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)
    n, c, h, w = x.shape

    def backward(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _make(out, (x,), backward)


# --------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state: AdamState):
    """One bias-corrected Adam update of every parameter, in place."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p in params:
        if p.grad is None:
            continue
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (p.grad * p.grad)
        p.data -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def zero_grads(params):
    for p in params:
        p.zero_grad()


# --------------------------------------------------------------------------
# finite differences


def numerical_grad(fn, tensor, eps=1e-5):
    """Central-difference gradient of scalar ``fn()`` w.r.t. ``tensor.data``."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn().item()
        flat[i] = orig - eps
        fm = fn().item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def gradient_check(fn, tensors, eps=1e-5):
    """Largest relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the graph and returns a scalar tensor. Relative error is
    ``||analytic - numeric|| / max(||analytic||, ||numeric||)`` per tensor.
    """
    for t in tensors:
        t.grad = None
    fn().backward()
    worst = 0.0
    for t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        numeric = numerical_grad(fn, t, eps)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-300)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst
