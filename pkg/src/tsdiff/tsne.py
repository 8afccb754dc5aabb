"""Exact t-SNE for inspecting generated-vs-real sample diversity.

Windows are flattened to T*D vectors, subsampled per class, and embedded
jointly in 2-D with the standard exact O(n^2) algorithm: perplexity-matched
Gaussian affinities, early exaggeration, momentum + per-parameter gains.
"""

from __future__ import annotations

import csv
import logging

import numpy as np

log = logging.getLogger(__name__)


class TsneError(ValueError):
    pass


def _pairwise_sq_dists(x):
    sq = (x * x).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _binary_search_affinities(d2, perplexity, tol=1e-5, max_iter=50):
    """Row-stochastic P with each row's entropy matched to log(perplexity)."""
    n = d2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        lo, hi = 0.0, np.inf
        beta = 1.0  # precision of the row's Gaussian
        di = np.delete(d2[i], i)
        for _ in range(max_iter):
            w = np.exp(-di * beta)
            s = w.sum()
            if s <= 0:
                h = 0.0
                p = np.zeros_like(w)
            else:
                p = w / s
                h = -(p * np.log(np.maximum(p, 1e-300))).sum()
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        P[i, np.arange(n) != i] = p
    return P


def tsne(x, perplexity=30.0, n_iter=1000, seed=0, lr=200.0):
    """Exact 2-D t-SNE of row vectors x: (n, d) -> (n, 2)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n <= 3 * perplexity:
        perplexity = max(2.0, (n - 1) / 3.0)
        log.warning("perplexity reduced to %.1f for %d points", perplexity, n)
    P = _binary_search_affinities(_pairwise_sq_dists(x), perplexity)
    P = (P + P.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    rng = np.random.default_rng(seed)
    y = 1e-4 * rng.standard_normal((n, 2))
    dy = np.zeros_like(y)
    gains = np.ones_like(y)
    exaggeration, exag_until = 12.0, 250
    for it in range(n_iter):
        num = 1.0 / (1.0 + _pairwise_sq_dists(y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        Pe = P * exaggeration if it < exag_until else P
        PQd = (Pe - Q) * num
        grad = 4.0 * ((np.diag(PQd.sum(axis=1)) - PQd) @ y)

        momentum = 0.5 if it < 250 else 0.8
        gains = np.where(np.sign(grad) != np.sign(dy), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        dy = momentum * dy - lr * gains * grad
        y = y + dy
        y = y - y.mean(axis=0)
    return y


def embed_2d(real, fake, n_max=500, seed=0, perplexity=30.0, n_iter=1000):
    """Joint 2-D embedding of real and generated windows.

    Returns (points (n, 2), labels list of 'real'/'fake'), with at most
    n_max points per class (random subsample).
    """
    if n_max < 5:
        raise TsneError("n_max must be >= 5")
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    rng = np.random.default_rng(seed)

    def flat_subsample(w):
        v = w.reshape(w.shape[0], -1)
        if v.shape[0] > n_max:
            v = v[rng.choice(v.shape[0], size=n_max, replace=False)]
        return v

    vr, vf = flat_subsample(real), flat_subsample(fake)
    pts = tsne(np.concatenate([vr, vf], axis=0), perplexity=perplexity,
               n_iter=n_iter, seed=seed)
    labels = ["real"] * vr.shape[0] + ["fake"] * vf.shape[0]
    return pts, labels


def write_embedding_csv(path, points, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "label"])
        for (x, y), lab in zip(points, labels):
            w.writerow([repr(float(x)), repr(float(y)), lab])


def write_embedding_svg(path, points, labels, size=480):
    """Minimal scatter plot of the embedding (real=blue, fake=orange)."""
    points = np.asarray(points, dtype=np.float64)
    lo = points.min(axis=0)
    span = np.maximum(points.max(axis=0) - lo, 1e-12)
    margin = 20
    scaled = margin + (points - lo) / span * (size - 2 * margin)
    colors = {"real": "#1f77b4", "fake": "#ff7f0e"}
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">']
    for (x, y), lab in zip(scaled, labels):
        parts.append(f'<circle cx="{x:.2f}" cy="{size - y:.2f}" r="3" '
                     f'fill="{colors.get(lab, "#777")}" fill-opacity="0.6"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
