"""Score network contracts: shapes, conditioning, differentiability."""

import numpy as np
import pytest

from tsdiff.engine import Tensor, backward, sum_, mul
from tsdiff.scorenet import ScoreNet, ScoreNetConfig


def tiny_net(depth=3, latent=8, seed=0):
    cfg = ScoreNetConfig(latent_dim=latent, time_embed_dim=8, depth=depth,
                         base_channels=4)
    return ScoreNet(cfg, np.random.default_rng(seed))


def test_time_embed_deterministic_and_sized():
    net = ScoreNet(ScoreNetConfig(latent_dim=24, time_embed_dim=96),
                   np.random.default_rng(0))
    e1 = net.time_embed(0.3)
    e2 = net.time_embed(0.3)
    assert e1.shape == (1, 96)
    assert np.array_equal(e1, e2)
    assert not np.array_equal(net.time_embed(0.1), net.time_embed(0.9))


def test_time_embed_domain():
    net = tiny_net()
    with pytest.raises(ValueError):
        net.time_embed(0.0)
    with pytest.raises(ValueError):
        net.time_embed(1.5)


def test_time_embed_smooth():
    net = tiny_net()
    h = 1e-6
    d = (net.time_embed(0.5 + h) - net.time_embed(0.5 - h)) / (2 * h)
    # bounded finite-difference derivative: |d/ds sin(2 pi s w)| <= 2 pi |w|
    bound = 2 * np.pi * np.abs(net.fourier_w).max() * 1.01
    assert np.abs(d).max() <= bound


@pytest.mark.parametrize("depth,latent", [(4, 24), (3, 24), (4, 56)])
def test_forward_shape(depth, latent):
    cfg = ScoreNetConfig(latent_dim=latent, time_embed_dim=16, depth=depth,
                         base_channels=4)
    net = ScoreNet(cfg, np.random.default_rng(1))
    rng = np.random.default_rng(2)
    out = net.forward(np.full(3, 0.5), rng.standard_normal((3, latent)),
                      rng.standard_normal((3, latent)))
    assert out.shape == (3, latent)


def test_forward_dim_mismatch():
    net = tiny_net()
    with pytest.raises(ValueError):
        net.forward(np.full(1, 0.5), np.zeros((1, 7)), np.zeros((1, 8)))


def test_batched_equals_independent():
    net = tiny_net()
    rng = np.random.default_rng(3)
    B = 6
    s = rng.uniform(0.1, 1.0, size=B)
    hd = rng.standard_normal((B, 8))
    hp = rng.standard_normal((B, 8))
    batched = net.forward(s, hd, hp).data
    for i in range(B):
        single = net.forward(s[i:i + 1], hd[i:i + 1], hp[i:i + 1]).data
        # BLAS rounding differs slightly with batch row count; any actual
        # cross-batch leakage would show up at O(1), not O(1e-15)
        assert np.abs(batched[i] - single[0]).max() < 1e-12


def test_conditioning_is_live():
    net = tiny_net()
    rng = np.random.default_rng(4)
    hd = rng.standard_normal((1, 8))
    o1 = net.forward(np.full(1, 0.5), hd, rng.standard_normal((1, 8))).data
    o2 = net.forward(np.full(1, 0.5), hd, rng.standard_normal((1, 8))).data
    assert np.abs(o1 - o2).max() > 1e-8


def test_deterministic_given_inputs():
    net = tiny_net()
    rng = np.random.default_rng(5)
    args = (np.full(2, 0.7), rng.standard_normal((2, 8)), rng.standard_normal((2, 8)))
    assert np.array_equal(net.forward(*args).data, net.forward(*args).data)


def test_grad_wrt_h_diffused_matches_fd():
    net = tiny_net()
    rng = np.random.default_rng(6)
    s = np.full(1, 0.6)
    hd = rng.standard_normal((1, 8))
    hp = rng.standard_normal((1, 8))

    def f(h):
        out = net.forward(s, h, hp).data
        return float((out * out).sum())

    hd_t = Tensor(hd.copy(), requires_grad=True)
    out = net.forward(s, hd_t, hp)
    grads = backward(sum_(mul(out, out)))
    analytic = grads[hd_t]

    numeric = np.zeros_like(hd)
    h = 1e-5
    for i in range(8):
        hp_p = hd.copy(); hp_p[0, i] += h
        hp_m = hd.copy(); hp_m[0, i] -= h
        numeric[0, i] = (f(hp_p) - f(hp_m)) / (2 * h)
    rel = np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1e-8)
    assert rel < 1e-4


def test_config_validation():
    with pytest.raises(ValueError):
        ScoreNetConfig(latent_dim=8, depth=5)
    with pytest.raises(ValueError):
        ScoreNetConfig(latent_dim=8, time_embed_dim=7)
