"""Benchmark the JIT kernels against the pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--repeats 5]

The module-level dispatch in comgen.kernels picks one backend per process,
but both implementations stay importable, so this script times them side by
side in a single run.  Shapes mirror a realistic training step (batch 32,
sequence 64, four heads).
"""

import argparse
import time

import numpy as np

from comgen import kernels


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(name, jit_fn, np_fn, args, repeats):
    if kernels.BACKEND == "numba":
        jit_fn(*args)  # compile outside the timed region
        jit_time = timeit(lambda: jit_fn(*args), repeats)
    else:
        jit_time = float("nan")
    np_time = timeit(lambda: np_fn(*args), repeats)
    speedup = np_time / jit_time if jit_time == jit_time else float("nan")
    print(f"{name:24s} numba {jit_time * 1e3:8.2f} ms   "
          f"numpy {np_time * 1e3:8.2f} ms   speedup {speedup:5.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}")

    rng = np.random.default_rng(0)
    b, h, l, dk = 32, 4, 64, 32
    q = rng.normal(size=(b, h, l, dk))
    table = rng.normal(size=(33, dk))
    idx = np.clip(np.arange(l)[None, :] - np.arange(l)[:, None], -16, 16) + 16
    idx = idx.astype(np.int64)
    attn = rng.normal(size=(b, h, l, l))
    g_scores = rng.normal(size=(b, h, l, l))
    g_values = rng.normal(size=(b, h, l, dk))

    bench("rel_scores", kernels.rel_scores, kernels._rel_scores_np,
          (q, table, idx), args.repeats)
    bench("rel_scores_grads", kernels.rel_scores_grads,
          kernels._rel_scores_grads_np, (g_scores, q, table, idx),
          args.repeats)
    bench("rel_values", kernels.rel_values, kernels._rel_values_np,
          (attn, table, idx), args.repeats)
    bench("rel_values_grads", kernels.rel_values_grads,
          kernels._rel_values_grads_np, (g_values, attn, table, idx),
          args.repeats)

    hdim = 128
    xg = rng.normal(size=(b, l, 3 * hdim))
    h0 = np.zeros((b, hdim))
    wh = rng.normal(size=(hdim, 3 * hdim)) * 0.05
    bh = np.zeros(3 * hdim)
    hs, cache = kernels._gru_forward_np(xg, h0, wh, bh)
    g = rng.normal(size=hs.shape)
    if kernels.BACKEND == "numba":
        bench("gru_forward", kernels._gru_forward_nb, kernels._gru_forward_np,
              (xg, h0, wh, bh), args.repeats)
        bench("gru_backward", kernels._gru_backward_nb,
              kernels._gru_backward_np, (g, xg, h0, wh, hs, cache),
              args.repeats)

    a = rng.integers(0, 50, size=1000).astype(np.int64)
    c = rng.integers(0, 50, size=1000).astype(np.int64)

    def lcs_py():
        kernels._lcs_length_py(list(a), list(c))

    if kernels.BACKEND == "numba":
        kernels.lcs_length(a, c)
        jit_time = timeit(lambda: kernels.lcs_length(a, c), args.repeats)
    else:
        jit_time = float("nan")
    np_time = timeit(lcs_py, args.repeats)
    speedup = np_time / jit_time if jit_time == jit_time else float("nan")
    print(f"{'lcs_length (1k x 1k)':24s} numba {jit_time * 1e3:8.2f} ms   "
          f"python {np_time * 1e3:8.2f} ms   speedup {speedup:5.2f}x")


if __name__ == "__main__":
    main()
