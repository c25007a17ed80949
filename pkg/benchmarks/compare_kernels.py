"""Compare the compiled kernels against the numpy fallback.

Both backends implement the same three hot kernels (full CSR aggregation,
row-subset aggregation, INT8 matmul). This script times them on synthetic
workloads shaped like the serving path and checks the outputs agree, so a
build without a compiler knows what it is giving up.

Run:  python benchmarks/compare_kernels.py [--nodes 20000] [--repeats 7]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fuserec.kernels import _npkern

try:
    from fuserec.kernels import _ckern
except ImportError:
    _ckern = None


def random_csr(rng, n_nodes: int, avg_degree: int):
    counts = rng.poisson(avg_degree, size=n_nodes)
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    nnz = int(indptr[-1])
    indices = rng.integers(0, n_nodes, size=nnz, dtype=np.int64)
    edge_w = rng.random(nnz)
    return indptr, indices, edge_w


def bench(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=20000)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--degree", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    indptr, indices, edge_w = random_csr(rng, args.nodes, args.degree)
    h = rng.standard_normal((args.nodes, args.dim))
    rows = rng.choice(args.nodes, size=max(args.nodes // 20, 1), replace=False).astype(np.int64)
    rows.sort()

    w = rng.standard_normal((64, 128))
    scales = np.abs(w).max(axis=1) / 127.0
    q = np.clip(np.round(w / scales[:, None]), -127, 127).astype(np.int8)
    x = rng.standard_normal((256, 128))

    cases = [
        ("csr_aggregate", (indptr, indices, edge_w, h)),
        ("csr_aggregate_rows", (indptr, indices, edge_w, h, rows)),
        ("int8_matmul", (q, scales, x)),
    ]

    print(f"nodes={args.nodes} dim={args.dim} avg_degree={args.degree} "
          f"nnz={indices.size} repeats={args.repeats}")
    header = f"{'kernel':20s} {'numpy':>10s} {'cython':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, case_args in cases:
        t_np = bench(getattr(_npkern, name), case_args, args.repeats)
        if _ckern is None:
            print(f"{name:20s} {t_np * 1e3:9.3f}ms {'n/a':>10s} {'n/a':>8s}")
            continue
        t_cy = bench(getattr(_ckern, name), case_args, args.repeats)
        ref = getattr(_npkern, name)(*case_args)
        got = getattr(_ckern, name)(*case_args)
        if not np.allclose(ref, got, rtol=0, atol=1e-12):
            raise SystemExit(f"{name}: backend outputs disagree")
        print(f"{name:20s} {t_np * 1e3:9.3f}ms {t_cy * 1e3:9.3f}ms {t_np / t_cy:7.2f}x")
    if _ckern is None:
        print("compiled extension not built; numpy fallback timings only")


if __name__ == "__main__":
    main()
