"""Pure-numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (or when
TSDIFF_KERNELS=py).  Matmuls are not here on purpose: both backends route
them through BLAS; these kernels cover the memory-movement and fused
elementwise parts of conv1d and the GRU cell.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def im2col1d(x, k, stride, pad):
    """(B, C, L) -> (B, C*k, Lout) patch matrix for 1-D convolution."""
    B, C, L = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    Lp = x.shape[2]
    Lout = (Lp - k) // stride + 1
    s0, s1, s2 = x.strides
    win = as_strided(x, (B, C, Lout, k), (s0, s1, s2 * stride, s2))
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B, C * k, Lout)


def col2im1d(cols, L, k, stride, pad):
    """Adjoint of im2col1d: scatter-add patches back to (B, C, L)."""
    B, Ck, Lout = cols.shape
    C = Ck // k
    cols = cols.reshape(B, C, k, Lout)
    Lp = L + 2 * pad
    out = np.zeros((B, C, Lp))
    for j in range(k):
        out[:, :, j:j + stride * Lout:stride] += cols[:, :, j, :]
    return out[:, :, pad:pad + L] if pad else out


def gru_gates_forward(gx, gh, h_prev):
    """Fused GRU gate math given precomputed input/hidden projections.

    gx, gh: (B, 3H) in gate order (reset, update, candidate).
    Returns h_new plus the activations needed by the backward pass.
    """
    H = h_prev.shape[1]
    r = _sigmoid(gx[:, :H] + gh[:, :H])
    z = _sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
    n = np.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
    h = (1.0 - z) * n + z * h_prev
    return h, r, z, n


def gru_gates_backward(dh, r, z, n, gh_n, h_prev):
    """Backward of gru_gates_forward.

    Returns (dgx, dgh, dh_prev_direct); the matmul portions of dh_prev
    are handled by the caller.
    """
    dz = dh * (h_prev - n) * z * (1.0 - z)
    dn = dh * (1.0 - z) * (1.0 - n * n)
    dr = dn * gh_n * r * (1.0 - r)
    dgx = np.concatenate([dr, dz, dn], axis=1)
    dgh = np.concatenate([dr, dz, dn * r], axis=1)
    return dgx, dgh, dh * z
