"""Dense float64 tensors with reverse-mode differentiation.

The tape is dynamic: every primitive whose inputs require gradients
records a backward closure on the output tensor.  `backward(root)` walks
the graph in reverse topological order, accumulates gradients into
`.grad`, and consumes the tape.  Only the fixed primitive set the models
need is provided; there is no broadcasting beyond what those primitives
use internally.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from .backend import kernels


class EngineError(Exception):
    """Shape mismatch, unknown primitive, or non-finite values."""


# Toggled off in tight loops that are already covered by outer checks.
check_finite = True

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / sampling)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Convenience operators; all routed through the primitives below.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    if check_finite and not np.all(np.isfinite(data)):
        raise EngineError("non-finite values in forward output")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Reduce gradient g down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), bwd)


def scale(a, c):
    c = float(c)

    def bwd(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), bwd)


def matmul(a, b):
    if a.data.shape[-1] != b.data.shape[-2]:
        raise EngineError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def bwd(g):
        _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make(out_data, (a, b), bwd)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, gi in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, gi)

    return _make(out_data, tensors, bwd)


def slice_(a, key):
    out_data = a.data[key]

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            _accum(a, full)

    return _make(out_data, (a,), bwd)


def reshape(a, shape):
    out_data = a.data.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.shape))

    return _make(out_data, (a,), bwd)


def tanh(a):
    out_data = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), bwd)


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out_data = _sigmoid_np(a.data)

    def bwd(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bwd)


def silu(a):
    s = _sigmoid_np(a.data)
    out_data = a.data * s

    def bwd(g):
        _accum(a, g * (s + a.data * s * (1.0 - s)))

    return _make(out_data, (a,), bwd)


def conv1d(x, w, b=None, stride=1, pad=0):
    """x: (B, Cin, L), w: (Cout, Cin, k), b: (Cout,) -> (B, Cout, Lout)."""
    B, Cin, L = x.shape
    Cout, Cin_w, k = w.shape
    if Cin != Cin_w:
        raise EngineError(f"conv1d channel mismatch: {Cin} vs {Cin_w}")
    cols = kernels.im2col1d(np.ascontiguousarray(x.data), k, stride, pad)
    w2 = w.data.reshape(Cout, Cin * k)
    out_data = np.matmul(w2, cols)
    if b is not None:
        out_data = out_data + b.data[None, :, None]

    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        if w.requires_grad:
            _accum(w, np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.matmul(w2.T, g)
            _accum(x, kernels.col2im1d(np.ascontiguousarray(dcols), L, k, stride, pad))

    return _make(out_data, parents, bwd)


def nearest_upsample1d(x, factor=2):
    """(B, C, L) -> (B, C, L*factor), nearest-neighbour repeat."""
    out_data = np.repeat(x.data, factor, axis=2)

    def bwd(g):
        B, C, Lf = g.shape
        _accum(x, g.reshape(B, C, Lf // factor, factor).sum(axis=3))

    return _make(out_data, (x,), bwd)


def group_norm(x, gamma, beta, num_groups, eps=1e-5):
    """Per-(sample, group) normalization over channels*length, then affine."""
    B, C, L = x.shape
    if C % num_groups != 0:
        raise EngineError(f"group_norm: {C} channels not divisible by {num_groups} groups")
    n = (C // num_groups) * L
    xg = x.data.reshape(B, num_groups, n)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, L)
    out_data = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def bwd(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=(0, 2)))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=(0, 2)))
        if x.requires_grad:
            dxh = (g * gamma.data[None, :, None]).reshape(B, num_groups, n)
            xh = xhat.reshape(B, num_groups, n)
            t1 = dxh.sum(axis=2, keepdims=True)
            t2 = (dxh * xh).sum(axis=2, keepdims=True)
            dx = inv / n * (n * dxh - t1 - xh * t2)
            _accum(x, dx.reshape(B, C, L))

    return _make(out_data, (x, gamma, beta), bwd)


def dense(x, w, b):
    """x: (..., D) @ w: (D, M) + b: (M,)."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise EngineError(f"dense shape mismatch {x.shape} @ {w.shape}")
    out_data = np.matmul(x.data, w.data) + b.data

    def bwd(g):
        if x.requires_grad:
            _accum(x, np.matmul(g, w.data.T))
        if w.requires_grad:
            x2 = x.data.reshape(-1, x.data.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            _accum(w, x2.T @ g2)
        if b.requires_grad:
            _accum(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _make(out_data, (x, w, b), bwd)


def gru_cell(x, h_prev, w_ih, w_hh, b_ih, b_hh):
    """One GRU step.  x: (B, D), h_prev: (B, H); weights (3H, D)/(3H, H),
    gate order (reset, update, candidate)."""
    H = h_prev.shape[1]
    if w_ih.shape != (3 * H, x.shape[1]) or w_hh.shape != (3 * H, H):
        raise EngineError("gru_cell weight shape mismatch")
    gx = x.data @ w_ih.data.T + b_ih.data
    gh = h_prev.data @ w_hh.data.T + b_hh.data
    h, r, z, n = kernels.gru_gates_forward(gx, gh, h_prev.data)
    gh_n = np.ascontiguousarray(gh[:, 2 * H:])

    parents = (x, h_prev, w_ih, w_hh, b_ih, b_hh)

    def bwd(g):
        dgx, dgh, dhp = kernels.gru_gates_backward(
            np.ascontiguousarray(g), r, z, n, gh_n, h_prev.data)
        if x.requires_grad:
            _accum(x, dgx @ w_ih.data)
        if h_prev.requires_grad:
            _accum(h_prev, dhp + dgh @ w_hh.data)
        if w_ih.requires_grad:
            _accum(w_ih, dgx.T @ x.data)
        if w_hh.requires_grad:
            _accum(w_hh, dgh.T @ h_prev.data)
        if b_ih.requires_grad:
            _accum(b_ih, dgx.sum(axis=0))
        if b_hh.requires_grad:
            _accum(b_hh, dgh.sum(axis=0))

    return _make(h, parents, bwd)


def mse(a, b):
    if a.shape != b.shape:
        raise EngineError(f"mse shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out_data = np.mean(diff * diff)
    n = diff.size

    def bwd(g):
        _accum(a, g * 2.0 * diff / n)
        _accum(b, g * (-2.0) * diff / n)

    return _make(out_data, (a, b), bwd)


def sum_(a, axis=None):
    out_data = a.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _make(out_data, (a,), bwd)


def mean_(a, axis=None):
    out_data = a.data.mean(axis=axis)
    n = a.size if axis is None else a.shape[axis]

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / n, a.shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).copy())

    return _make(out_data, (a,), bwd)


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "concat": concat,
    "slice": slice_,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "silu": silu,
    "conv1d": conv1d,
    "nearest_upsample1d": nearest_upsample1d,
    "group_norm": group_norm,
    "dense": dense,
    "gru_cell": gru_cell,
    "mse": mse,
    "sum": sum_,
    "mean": mean_,
    "scale": scale,
    "reshape": reshape,
}


def forward_primitive(op, *inputs, **kwargs):
    """Dispatch a primitive by id.  Raises EngineError for unknown ids."""
    try:
        fn = _PRIMITIVES[op]
    except KeyError:
        raise EngineError(f"unknown primitive: {op!r}") from None
    return fn(*inputs, **kwargs)


def backward(root):
    """Backpropagate from a scalar root; returns {leaf Tensor: gradient}.

    The tape is consumed: node links are cleared as they are processed.
    """
    if root.data.ndim != 0 and root.size != 1:
        raise EngineError(f"backward root must be scalar, got shape {root.shape}")

    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    root.grad = np.ones_like(root.data)
    leaves = {}
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
        elif node.requires_grad:
            leaves[node] = node.grad
        node._parents = ()
        node._backward = None
    return leaves


def clip_grad_norm(grads, max_norm):
    """Scale the gradient map in place so its global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm and total > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total
