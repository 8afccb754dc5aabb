"""Benchmark the compiled kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py

Only the memory-movement/fused-elementwise kernels differ between
backends (matrix multiplies go through BLAS either way), so this measures
im2col/col2im and the fused GRU gate math on training-sized shapes.
"""

import time

import numpy as np

from tsdiff.engine import kernels_py

try:
    from tsdiff.engine import _ckernels
except ImportError:
    _ckernels = None


def bench(fn, args, repeat=20):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def run_case(name, make_args, py_fn, c_fn):
    args = make_args()
    t_py = bench(py_fn, args)
    line = f"{name:<28s} python {t_py * 1e3:8.3f} ms"
    if c_fn is not None:
        t_c = bench(c_fn, args)
        line += f"   compiled {t_c * 1e3:8.3f} ms   speedup {t_py / t_c:5.2f}x"
    print(line)


def main():
    rng = np.random.default_rng(0)
    B, C, L, k = 128, 64, 24, 3
    H = 24

    x = rng.standard_normal((B, C, L))
    cols = kernels_py.im2col1d(x, k, 1, 1)

    gx = rng.standard_normal((B, 3 * H))
    gh = rng.standard_normal((B, 3 * H))
    h_prev = rng.standard_normal((B, H))
    _, r, z, n = kernels_py.gru_gates_forward(gx, gh, h_prev)
    dh = rng.standard_normal((B, H))
    gh_n = gh[:, 2 * H:]

    if _ckernels is None:
        print("compiled extension not available; timing python backend only")

    cases = [
        ("im2col1d (128x64x24, k=3)", lambda: (x, k, 1, 1),
         kernels_py.im2col1d, _ckernels.im2col1d if _ckernels else None),
        ("col2im1d (128x64x24, k=3)", lambda: (cols, L, k, 1, 1),
         kernels_py.col2im1d, _ckernels.col2im1d if _ckernels else None),
        ("gru_gates_forward (128x24)", lambda: (gx, gh, h_prev),
         kernels_py.gru_gates_forward,
         _ckernels.gru_gates_forward if _ckernels else None),
        ("gru_gates_backward (128x24)", lambda: (dh, r, z, n, gh_n, h_prev),
         kernels_py.gru_gates_backward,
         _ckernels.gru_gates_backward if _ckernels else None),
    ]
    for case in cases:
        run_case(*case)


if __name__ == "__main__":
    main()
