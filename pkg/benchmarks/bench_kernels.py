"""Time the edge gather/scatter kernels: numba JIT against the numpy/scipy path.

    python3 benchmarks/bench_kernels.py [--nodes 4000] [--repeat 20]
"""

import argparse
import time

import numpy as np

from confmil.numkern import _numpy_kernels

try:
    from confmil.numkern import _numba_kernels
except ImportError:  # numba not installed
    _numba_kernels = None


def problem(n_nodes, degree, d_e, hidden, seed=0):
    rng = np.random.default_rng(seed)
    n_edges = n_nodes * degree
    src = rng.integers(0, n_nodes, n_edges)
    dst = np.sort(rng.integers(0, n_nodes, n_edges))
    P = rng.standard_normal((n_nodes, d_e, hidden))
    ef = rng.standard_normal((n_edges, d_e))
    gm = rng.standard_normal((n_nodes, hidden))
    return P, ef, src, dst, gm


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=4000)
    ap.add_argument("--degree", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    P, ef, src, dst, gm = problem(args.nodes, args.degree, 13, 16)
    n = args.nodes
    backends = [("numpy", _numpy_kernels)]
    if _numba_kernels is not None:
        backends.append(("numba", _numba_kernels))
    print(f"nodes={n} edges={src.size}")
    ref = None
    for name, mod in backends:
        fwd = best_of(lambda: mod.edge_messages(P, ef, src, dst, n), args.repeat)
        bwd = best_of(lambda: mod.edge_messages_grad(gm, ef, src, dst, n), args.repeat)
        out = mod.edge_messages(P, ef, src, dst, n)
        diff = 0.0 if ref is None else float(np.max(np.abs(out - ref)))
        ref = out if ref is None else ref
        print(f"{name:6s} forward {fwd * 1e3:8.3f} ms  backward {bwd * 1e3:8.3f} ms  max|diff| {diff:.1e}")


if __name__ == "__main__":
    main()
