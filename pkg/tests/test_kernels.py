"""Backend parity: the compiled kernels must match the numpy fallback exactly
(on the same float64 inputs both compute the same sums in the same order), and
both must match a dense reference.
"""

import numpy as np
import pytest

from fuserec import kernels
from fuserec.kernels import _npkern

try:
    from fuserec.kernels import _ckern
except ImportError:
    _ckern = None

needs_cython = pytest.mark.skipif(_ckern is None, reason="compiled extension not built")


def random_csr(rng, n, avg_degree=6):
    counts = rng.poisson(avg_degree, size=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = rng.integers(0, n, size=int(indptr[-1]), dtype=np.int64)
    edge_w = rng.random(int(indptr[-1]))
    return indptr, indices, edge_w


def dense_from_csr(indptr, indices, edge_w, n):
    m = np.zeros((n, n))
    for v in range(n):
        for j in range(indptr[v], indptr[v + 1]):
            m[v, indices[j]] += edge_w[j]
    return m


def test_csr_aggregate_matches_dense(rng):
    for _ in range(20):
        n = int(rng.integers(1, 40))
        indptr, indices, edge_w = random_csr(rng, n)
        h = rng.standard_normal((n, 5))
        expected = dense_from_csr(indptr, indices, edge_w, n) @ h
        got = kernels.csr_aggregate(indptr, indices, edge_w, h)
        assert np.allclose(got, expected, atol=1e-12)


def test_csr_aggregate_rows_subset(rng):
    n = 30
    indptr, indices, edge_w = random_csr(rng, n)
    h = rng.standard_normal((n, 4))
    full = kernels.csr_aggregate(indptr, indices, edge_w, h)
    rows = np.array([3, 7, 7, 0, 29], dtype=np.int64)  # dups and order preserved
    got = kernels.csr_aggregate_rows(indptr, indices, edge_w, h, rows)
    assert np.array_equal(got, full[rows])


def test_int8_matmul_matches_dequantized(rng):
    q = rng.integers(-127, 128, size=(8, 16)).astype(np.int8)
    scales = rng.random(8) + 0.01
    x = rng.standard_normal((5, 16))
    expected = x @ (q.astype(np.float64) * scales[:, None]).T
    assert np.allclose(kernels.int8_matmul(q, scales, x), expected, atol=1e-12)


def test_int8_matmul_accepts_single_vector(rng):
    q = rng.integers(-127, 128, size=(3, 4)).astype(np.int8)
    scales = np.ones(3)
    out = kernels.int8_matmul(q, scales, rng.standard_normal(4))
    assert out.shape == (1, 3)


@needs_cython
@pytest.mark.parametrize("trial", range(10))
def test_backend_parity_aggregate(rng, trial):
    rng = np.random.default_rng(trial)
    n = int(rng.integers(1, 60))
    indptr, indices, edge_w = random_csr(rng, n)
    h = rng.standard_normal((n, 7))
    a = _npkern.csr_aggregate(indptr, indices, edge_w, h)
    b = _ckern.csr_aggregate(indptr, indices, edge_w, h)
    assert np.allclose(a, b, atol=1e-12)
    rows = rng.integers(0, n, size=max(n // 3, 1)).astype(np.int64)
    ar = _npkern.csr_aggregate_rows(indptr, indices, edge_w, h, rows)
    br = _ckern.csr_aggregate_rows(indptr, indices, edge_w, h, rows)
    assert np.allclose(ar, br, atol=1e-12)


@needs_cython
def test_backend_parity_int8(rng):
    q = rng.integers(-127, 128, size=(6, 9)).astype(np.int8)
    scales = rng.random(6) + 0.01
    x = rng.standard_normal((4, 9))
    a = _npkern.int8_matmul(q, scales, x)
    b = _ckern.int8_matmul(q, scales, x)
    assert np.allclose(a, b, atol=1e-12)


def test_backend_name_reported():
    assert kernels.BACKEND in ("cython", "numpy")
