"""Adam with bias correction and EMA parameter shadowing."""

from __future__ import annotations

import numpy as np

from .tensor import EngineError


class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(params, grads, state, lr=None):
    """One bias-corrected Adam update, in place.

    params: {name: Tensor}; grads: {name: ndarray}.  `lr` overrides the
    stored learning rate (warmup schedules).
    """
    state.step += 1
    lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise EngineError(f"adam_step: gradient shape {g.shape} != "
                              f"parameter shape {p.data.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class EmaState:
    """Exponential moving average of a parameter set."""

    def __init__(self, params, decay=0.999):
        if not 0.0 < decay < 1.0:
            raise EngineError(f"EMA decay must be in (0,1), got {decay}")
        self.decay = decay
        self.shadow = {name: p.data.copy() for name, p in params.items()}


def ema_update(state, params):
    """shadow <- decay*shadow + (1-decay)*params, in place."""
    d = state.decay
    for name, p in params.items():
        s = state.shadow[name]
        if s.shape != p.data.shape:
            raise EngineError(f"ema_update: shape mismatch for {name!r}")
        s *= d
        s += (1.0 - d) * p.data
    return state


def ema_copy_to(state, params):
    """Load the shadow weights into params (returns saved originals)."""
    saved = {name: p.data.copy() for name, p in params.items()}
    for name, p in params.items():
        p.data[...] = state.shadow[name]
    return saved


def restore(params, saved):
    for name, p in params.items():
        p.data[...] = saved[name]
