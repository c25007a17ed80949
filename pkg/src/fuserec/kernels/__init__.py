"""Hot-kernel dispatch: compiled extension when built, numpy otherwise.

``BACKEND`` reports which implementation is active ("cython" or "numpy").
Set ``FUSEREC_FORCE_NUMPY=1`` to force the fallback, e.g. for the kernel
comparison benchmark or to reproduce results without a compiler.
"""

from __future__ import annotations

import os

import numpy as np

from fuserec.kernels import _npkern

BACKEND = "numpy"
_impl = _npkern
if not os.environ.get("FUSEREC_FORCE_NUMPY"):
    try:
        from fuserec.kernels import _ckern as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def _c_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _c_i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def csr_aggregate(indptr, indices, edge_w, h):
    """Weighted neighbor sum over every CSR row; returns (n_rows, d)."""
    return _impl.csr_aggregate(_c_i64(indptr), _c_i64(indices), _c_f64(edge_w), _c_f64(h))


def csr_aggregate_rows(indptr, indices, edge_w, h, rows):
    """Weighted neighbor sum for a subset of rows, in the order given."""
    return _impl.csr_aggregate_rows(
        _c_i64(indptr), _c_i64(indices), _c_f64(edge_w), _c_f64(h), _c_i64(rows)
    )


def int8_matmul(q, scales, x):
    """Apply a row-quantized matrix to a batch: (b, cols) -> (b, rows)."""
    q = np.ascontiguousarray(q, dtype=np.int8)
    x = np.atleast_2d(_c_f64(x))
    # always numpy: dense GEMM is BLAS-bound and the compiled loop loses
    # badly there (see benchmarks/compare_kernels.py)
    return _npkern.int8_matmul(q, _c_f64(scales), x)
