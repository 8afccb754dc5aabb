"""Post-hoc evaluation metrics for generated time-series.

Discriminative score: train a small recurrent classifier to separate real
from generated windows; report |0.5 - test accuracy| (0 = indistinguishable).
Predictive score: train-on-synthetic-test-on-real (TSTR) one-step-ahead
forecasting; report MAE on the real test windows.  Both are "lower is
better".
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import GruStack, _uniform
from .engine import tensor as T
from .engine.optim import AdamState, adam_step
from .engine.tensor import Tensor, clip_grad_norm

log = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


@dataclass
class PostHocModelConfig:
    task: str  # "classify" | "forecast"
    hidden: int
    layers: int = 2
    iters: int = 2000
    lr: float = 1e-3
    batch_size: int = 128
    cell: str = "gru"  # "gru" | "lstm"

    def __post_init__(self):
        if self.task not in ("classify", "forecast"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.cell not in ("gru", "lstm"):
            raise ValueError(f"unknown cell {self.cell!r}")
        if min(self.hidden, self.layers, self.iters, self.batch_size) < 1:
            raise ValueError("post-hoc model sizes must be positive")


@dataclass
class MetricReport:
    metric: str
    runs: list
    mean: float
    std: float
    n_runs: int = field(init=False)

    def __post_init__(self):
        self.n_runs = len(self.runs)
        if self.n_runs < 1:
            raise MetricError("report needs at least one run")
        if self.std < 0:
            raise MetricError("std must be non-negative")


class LstmStack:
    """Stacked LSTM layers built from the dense/sigmoid/tanh primitives."""

    def __init__(self, input_dim, hidden_dim, n_layers, rng, prefix):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.prefix = prefix
        self.params = {}
        for layer in range(n_layers):
            d = input_dim if layer == 0 else hidden_dim
            bound = 1.0 / np.sqrt(hidden_dim)
            self.params[f"{prefix}.w_ih{layer}"] = _uniform(rng, (d, 4 * hidden_dim), bound)
            self.params[f"{prefix}.w_hh{layer}"] = _uniform(rng, (hidden_dim, 4 * hidden_dim), bound)
            self.params[f"{prefix}.b{layer}"] = _uniform(rng, (4 * hidden_dim,), bound)

    def _cell(self, layer, x_t, h, c):
        p, H = self.params, self.hidden_dim
        gates = T.add(T.dense(x_t, p[f"{self.prefix}.w_ih{layer}"],
                              p[f"{self.prefix}.b{layer}"]),
                      T.matmul(h, p[f"{self.prefix}.w_hh{layer}"]))
        i = T.sigmoid(T.slice_(gates, (slice(None), slice(0, H))))
        f = T.sigmoid(T.slice_(gates, (slice(None), slice(H, 2 * H))))
        g = T.tanh(T.slice_(gates, (slice(None), slice(2 * H, 3 * H))))
        o = T.sigmoid(T.slice_(gates, (slice(None), slice(3 * H, 4 * H))))
        c_new = T.add(T.mul(f, c), T.mul(i, g))
        h_new = T.mul(o, T.tanh(c_new))
        return h_new, c_new

    def forward(self, x):
        """x: (B, T, D) -> top-layer hidden states (B, T, H)."""
        B, Tlen, _ = x.shape
        hs = [Tensor(np.zeros((B, self.hidden_dim))) for _ in range(self.n_layers)]
        cs = [Tensor(np.zeros((B, self.hidden_dim))) for _ in range(self.n_layers)]
        outs = []
        for t in range(Tlen):
            inp = x[:, t, :]
            for layer in range(self.n_layers):
                hs[layer], cs[layer] = self._cell(layer, inp, hs[layer], cs[layer])
                inp = hs[layer]
            outs.append(T.reshape(hs[-1], (B, 1, self.hidden_dim)))
        return T.concat(outs, axis=1)


def _make_stack(cell, input_dim, hidden, layers, rng, prefix):
    cls = GruStack if cell == "gru" else LstmStack
    return cls(input_dim, hidden, layers, rng, prefix)


class _RnnRegressor:
    """Recurrent network with a per-step (or final-step) dense sigmoid head."""

    def __init__(self, input_dim, hidden, layers, cell, rng, out_dim=1):
        self.rnn = _make_stack(cell, input_dim, hidden, layers, rng, "rnn")
        bound = 1.0 / np.sqrt(hidden)
        self.out_w = _uniform(rng, (hidden, out_dim), bound)
        self.out_b = _uniform(rng, (out_dim,), bound)
        self.params = dict(self.rnn.params, out_w=self.out_w, out_b=self.out_b)

    def forward_steps(self, x):
        """(B, T, D) -> sigmoid outputs per step (B, T, out_dim)."""
        g = self.rnn.forward(x)
        return T.sigmoid(T.dense(g, self.out_w, self.out_b))

    def forward_last(self, x):
        """(B, T, D) -> sigmoid output of the final step (B, out_dim)."""
        y = self.forward_steps(x)
        return T.slice_(y, (slice(None), -1))


def _train(model, make_batch, config, rng):
    opt = AdamState(model.params, lr=config.lr)
    for it in range(config.iters):
        x, y = make_batch(rng)
        pred = model.forward_last(Tensor(x)) if config.task == "classify" \
            else model.forward_steps(Tensor(x))
        # squared error on the sigmoid output as the training surrogate for
        # both tasks; MAE is computed at evaluation time for forecasting
        loss = T.mse(pred, Tensor(y))
        grads = T.backward(loss)
        by_name = {k: grads[p] for k, p in model.params.items() if p in grads}
        clip_grad_norm(by_name, 1.0)
        # linear lr decay: without it the recurrent models oscillate and
        # the scores carry large run-to-run variance
        adam_step(model.params, by_name, opt,
                  lr=config.lr * (1.0 - it / config.iters))
    return model


def discriminative_score(real, fake, seed, config=None):
    """|0.5 - test accuracy| of a classifier separating real from fake."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise MetricError(f"shape mismatch: real {real.shape} vs fake {fake.shape}")
    if real.shape[0] < 2:
        raise MetricError("need at least 2 samples per class")
    n, Tlen, D = real.shape
    if config is None:
        config = PostHocModelConfig(task="classify", hidden=D, layers=2)

    rng = np.random.default_rng(seed)
    x = np.concatenate([real, fake], axis=0)
    y = np.concatenate([np.ones(n), np.zeros(n)])[:, None]
    perm = rng.permutation(2 * n)
    x, y = x[perm], y[perm]
    n_train = max(2, int(0.8 * 2 * n))
    x_tr, y_tr = x[:n_train], y[:n_train]
    x_te, y_te = x[n_train:], y[n_train:]
    if x_te.shape[0] < 1:
        raise MetricError("test split is empty")

    model = _RnnRegressor(D, config.hidden, config.layers, config.cell, rng)

    def make_batch(r):
        idx = r.integers(0, x_tr.shape[0], size=min(config.batch_size, x_tr.shape[0]))
        return x_tr[idx], y_tr[idx]

    _train(model, make_batch, config, rng)
    with T.no_grad():
        p = model.forward_last(Tensor(x_te)).data
    acc = float(((p > 0.5) == (y_te > 0.5)).mean())
    return abs(0.5 - acc)


def _forecast_views(windows):
    """Split (B, T, D) windows into forecaster inputs and targets.

    Inputs: features 1..D-1 over steps 1..T-1; target: last feature over
    steps 2..T.  With a single feature the model falls back to predicting
    the feature from its own past.
    """
    windows = np.asarray(windows, dtype=np.float64)
    _, Tlen, D = windows.shape
    if Tlen < 2:
        raise MetricError("forecasting needs windows of length >= 2")
    if D < 2:
        log.warning("predictive score: single feature, using autoregressive mode")
        x = windows[:, :-1, :]
    else:
        x = windows[:, :-1, :-1]
    y = windows[:, 1:, -1:]
    return x, y


def predictive_score(fake_train, real_test, seed, config=None):
    """TSTR mean absolute error of a one-step-ahead forecaster."""
    x_tr, y_tr = _forecast_views(fake_train)
    x_te, y_te = _forecast_views(real_test)
    if x_tr.shape[1:] != x_te.shape[1:]:
        raise MetricError("train/test window shapes differ")
    D_in = x_tr.shape[-1]
    if config is None:
        config = PostHocModelConfig(task="forecast",
                                    hidden=np.asarray(fake_train).shape[-1],
                                    layers=1)

    rng = np.random.default_rng(seed)
    model = _RnnRegressor(D_in, config.hidden, config.layers, config.cell, rng)

    def make_batch(r):
        idx = r.integers(0, x_tr.shape[0], size=min(config.batch_size, x_tr.shape[0]))
        return x_tr[idx], y_tr[idx]

    _train(model, make_batch, config, rng)
    with T.no_grad():
        pred = model.forward_steps(Tensor(x_te)).data
    return float(np.abs(pred - y_te).mean())


def aggregate(runs, metric):
    """Mean and sample standard deviation over seed runs."""
    runs = [float(v) for v in runs]
    if not runs:
        raise MetricError("no runs to aggregate")
    mean = float(np.mean(runs))
    std = float(np.std(runs, ddof=1)) if len(runs) > 1 else 0.0
    return MetricReport(metric=metric, runs=runs, mean=mean, std=std)


def write_report(path, reports, config=None, seeds=None):
    """Report JSON: one entry per metric with runs, mean, std."""
    doc = {
        "metrics": [{"metric": r.metric, "runs": r.runs, "mean": r.mean,
                     "std": r.std, "n_runs": r.n_runs} for r in reports],
        "config": config,
        "seeds": seeds,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
