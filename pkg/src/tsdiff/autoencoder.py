"""Recurrent encoder/decoder between data space and latent space.

The encoder is a stacked GRU whose top-layer state h_t summarizes
x_{1:t} (h_0 = 0).  The decoder is a stacked GRU over the latent path
followed by a per-step dense layer with a sigmoid, since inputs are
min-max normalized to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import tensor as T
from .engine.tensor import Tensor


@dataclass
class AutoencoderConfig:
    input_dim: int
    latent_dim: int
    rnn_layers: int = 3
    window: int = 24

    def __post_init__(self):
        if min(self.input_dim, self.latent_dim, self.rnn_layers, self.window) < 1:
            raise ValueError("autoencoder config fields must be positive")


def _uniform(rng, shape, bound):
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class GruStack:
    """Stacked GRU layers sharing the step/scan logic."""

    def __init__(self, input_dim, hidden_dim, n_layers, rng, prefix):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.params = {}
        for layer in range(n_layers):
            d = input_dim if layer == 0 else hidden_dim
            bound = 1.0 / np.sqrt(hidden_dim)
            self.params[f"{prefix}.w_ih{layer}"] = _uniform(rng, (3 * hidden_dim, d), bound)
            self.params[f"{prefix}.w_hh{layer}"] = _uniform(rng, (3 * hidden_dim, hidden_dim), bound)
            self.params[f"{prefix}.b_ih{layer}"] = _uniform(rng, (3 * hidden_dim,), bound)
            self.params[f"{prefix}.b_hh{layer}"] = _uniform(rng, (3 * hidden_dim,), bound)
        self.prefix = prefix

    def step(self, x_t, hs):
        """One time step through all layers; hs is the per-layer state list."""
        new_hs = []
        inp = x_t
        for layer in range(self.n_layers):
            p = self.params
            h = T.gru_cell(inp, hs[layer],
                           p[f"{self.prefix}.w_ih{layer}"],
                           p[f"{self.prefix}.w_hh{layer}"],
                           p[f"{self.prefix}.b_ih{layer}"],
                           p[f"{self.prefix}.b_hh{layer}"])
            new_hs.append(h)
            inp = h
        return new_hs

    def forward(self, x):
        """x: (B, T, D) -> top-layer states (B, T, H)."""
        B, Tlen, _ = x.shape
        hs = [Tensor(np.zeros((B, self.hidden_dim))) for _ in range(self.n_layers)]
        outs = []
        for t in range(Tlen):
            hs = self.step(x[:, t, :], hs)
            outs.append(T.reshape(hs[-1], (B, 1, self.hidden_dim)))
        return T.concat(outs, axis=1)


class Autoencoder:
    def __init__(self, config: AutoencoderConfig, rng):
        self.config = config
        self.encoder = GruStack(config.input_dim, config.latent_dim,
                                config.rnn_layers, rng, "enc")
        self.decoder_rnn = GruStack(config.latent_dim, config.latent_dim,
                                    config.rnn_layers, rng, "dec")
        bound = 1.0 / np.sqrt(config.latent_dim)
        self.out_w = _uniform(rng, (config.latent_dim, config.input_dim), bound)
        self.out_b = _uniform(rng, (config.input_dim,), bound)

    @property
    def params(self):
        p = {}
        p.update(self.encoder.params)
        p.update(self.decoder_rnn.params)
        p["dec.out_w"] = self.out_w
        p["dec.out_b"] = self.out_b
        return p

    def encode(self, x):
        """x: (B, T, D) normalized to [0,1] -> latent path (B, T, latent_dim)."""
        if x.shape[-1] != self.config.input_dim:
            raise ValueError(f"expected {self.config.input_dim} features, "
                             f"got {x.shape[-1]}")
        if x.shape[1] < 1:
            raise ValueError("empty series")
        return self.encoder.forward(x)

    def decode(self, h):
        """h: (B, T, latent_dim) -> reconstruction in [0,1], (B, T, D)."""
        if h.shape[-1] != self.config.latent_dim:
            raise ValueError(f"expected latent dim {self.config.latent_dim}, "
                             f"got {h.shape[-1]}")
        g = self.decoder_rnn.forward(h)
        return T.sigmoid(T.dense(g, self.out_w, self.out_b))

    def reconstruct(self, x):
        return self.decode(self.encode(x))


def recon_loss(x, x_hat):
    """Mean squared error over all steps and features."""
    return T.mse(x_hat, x)
