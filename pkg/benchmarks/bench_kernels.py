"""Time the compiled segment kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from papergraph.kernels import BACKEND, py_ops

try:
    from papergraph.kernels import _gatops
except ImportError:
    _gatops = None


def _random_segments(rng, n_nodes: int, avg_deg: int):
    counts = rng.integers(1, 2 * avg_deg, size=n_nodes)
    starts = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    return starts, int(starts[-1])


def _time(fn, *args, repeat: int = 7) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    rng = np.random.default_rng(7)
    n_nodes, avg_deg, heads, out_dim = 20_000, 6, 4, 128
    starts, n_edges = _random_segments(rng, n_nodes, avg_deg)
    e = rng.standard_normal((n_edges, heads)).astype(np.float32)
    alpha = py_ops.seg_softmax(e, starts)
    grad = rng.standard_normal((n_edges, heads)).astype(np.float32)
    msg = rng.standard_normal((n_edges, heads * out_dim)).astype(np.float32)
    idx = rng.integers(0, n_nodes, size=n_edges)

    print(f"active backend: {BACKEND}")
    print(f"nodes={n_nodes} edges={n_edges} heads={heads} out={out_dim}")
    print()
    print(f"{'kernel':<18}{'fallback (ms)':>15}{'compiled (ms)':>15}{'speedup':>10}")

    cases = [
        ("seg_softmax", (e, starts)),
        ("seg_softmax_grad", (alpha, grad, starts)),
        ("seg_sum", (msg, starts)),
        ("scatter_add", (msg, idx, n_nodes)),
    ]
    for name, args in cases:
        base = _time(getattr(py_ops, name), *args) * 1e3
        if _gatops is None:
            print(f"{name:<18}{base:>15.2f}{'n/a':>15}{'-':>10}")
            continue
        want = getattr(py_ops, name)(*args)
        got = getattr(_gatops, name)(*args)
        # float32 summation order differs between the backends, so allow
        # accumulation noise proportional to the O(1)-magnitude terms
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5,
                                   err_msg=f"{name}: backends disagree")
        fast = _time(getattr(_gatops, name), *args) * 1e3
        print(f"{name:<18}{base:>15.2f}{fast:>15.2f}{base / fast:>9.1f}x")

    if _gatops is None:
        print("\ncompiled backend unavailable; install with a C toolchain to compare")


if __name__ == "__main__":
    main()
