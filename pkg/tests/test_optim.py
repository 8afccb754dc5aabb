"""Closed-form oracles for the Adam update and EMA shadowing."""

import numpy as np
import pytest

from tsdiff.engine import EngineError, Tensor
from tsdiff.engine.optim import (
    AdamState, EmaState, adam_step, ema_copy_to, ema_update, restore)


def make_param(val=0.0):
    return {"w": Tensor(np.array([val]), requires_grad=True)}


def test_adam_first_step_closed_form():
    # one step, g=1, fresh state: delta = -lr * 1/(1+eps*...) ~ -lr
    params = make_param(0.0)
    state = AdamState(params, lr=1e-3)
    adam_step(params, {"w": np.array([1.0])}, state)
    # mhat = 1, vhat = 1 -> delta = -lr/(1+eps)
    expected = -1e-3 / (1.0 + 1e-8)
    assert params["w"].data[0] == pytest.approx(expected, rel=1e-12)
    assert state.step == 1


def test_adam_zero_gradient_noop():
    params = make_param(1.5)
    state = AdamState(params, lr=1e-3)
    adam_step(params, {"w": np.zeros(1)}, state)
    assert params["w"].data[0] == 1.5


def test_adam_constant_gradient_monotone():
    # |delta| shrinks monotonically toward lr*|sign(g)| direction
    params = make_param(0.0)
    state = AdamState(params, lr=1e-3)
    prev = params["w"].data[0]
    deltas = []
    for _ in range(5):
        adam_step(params, {"w": np.array([1.0])}, state)
        deltas.append(abs(params["w"].data[0] - prev))
        prev = params["w"].data[0]
    # non-increasing up to float rounding of the running parameter
    assert all(deltas[i] >= deltas[i + 1] - 1e-12 for i in range(len(deltas) - 1))
    assert all(d <= 1e-3 * (1 + 1e-6) for d in deltas)


def test_adam_matches_manual_recurrence():
    rng = np.random.default_rng(0)
    params = {"w": Tensor(rng.standard_normal(4), requires_grad=True)}
    ref = params["w"].data.copy()
    state = AdamState(params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
    m = np.zeros(4)
    v = np.zeros(4)
    for step in range(1, 6):
        g = rng.standard_normal(4)
        adam_step(params, {"w": g.copy()}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** step)) / (np.sqrt(v / (1 - 0.999 ** step)) + 1e-8)
    assert np.allclose(params["w"].data, ref, atol=1e-14)


def test_adam_shape_mismatch():
    params = make_param()
    state = AdamState(params)
    with pytest.raises(EngineError):
        adam_step(params, {"w": np.zeros((2, 2))}, state)


def test_ema_basic_step():
    params = {"w": Tensor(np.array([1.0]), requires_grad=True)}
    state = EmaState(params, decay=0.999)
    state.shadow["w"][...] = 0.0
    ema_update(state, params)
    assert state.shadow["w"][0] == pytest.approx(0.001)


def test_ema_fixed_point():
    params = {"w": Tensor(np.array([2.5]), requires_grad=True)}
    state = EmaState(params, decay=0.99)
    ema_update(state, params)
    assert state.shadow["w"][0] == pytest.approx(2.5)


def test_ema_geometric_gap():
    # k updates toward a constant close 1 - decay^k of the gap
    decay = 0.9
    params = {"w": Tensor(np.array([1.0]), requires_grad=True)}
    state = EmaState(params, decay=decay)
    state.shadow["w"][...] = 0.0
    k = 7
    for _ in range(k):
        ema_update(state, params)
    assert state.shadow["w"][0] == pytest.approx(1.0 - decay ** k, rel=1e-12)


def test_ema_decay_domain():
    params = make_param()
    with pytest.raises(EngineError):
        EmaState(params, decay=1.0)


def test_ema_copy_and_restore():
    params = {"w": Tensor(np.array([3.0]), requires_grad=True)}
    state = EmaState(params, decay=0.5)
    state.shadow["w"][...] = -1.0
    saved = ema_copy_to(state, params)
    assert params["w"].data[0] == -1.0
    restore(params, saved)
    assert params["w"].data[0] == 3.0
