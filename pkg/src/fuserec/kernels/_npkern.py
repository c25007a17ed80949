"""Pure-numpy implementations of the hot kernels.

Selected automatically when the compiled extension is unavailable (or when
``FUSEREC_FORCE_NUMPY`` is set). Semantics match ``_ckern`` exactly; the
summation over a CSR row runs left to right in storage order in both.
"""

from __future__ import annotations

import numpy as np


def csr_aggregate(indptr, indices, edge_w, h):
    """out[v] = sum over edges e of row v of edge_w[e] * h[indices[e]]."""
    n = indptr.shape[0] - 1
    out = np.zeros((n, h.shape[1]), dtype=np.float64)
    if indices.shape[0] == 0:
        return out
    contrib = edge_w[:, None] * h[indices]
    lens = np.diff(indptr)
    nonempty = lens > 0
    # reduceat segments between consecutive non-empty row starts are exactly
    # the rows' edge ranges because empty rows contribute no positions.
    out[nonempty] = np.add.reduceat(contrib, indptr[:-1][nonempty], axis=0)
    return out


def csr_aggregate_rows(indptr, indices, edge_w, h, rows):
    """Row-subset variant: aggregate only the listed rows, in list order."""
    d = h.shape[1]
    lens = indptr[rows + 1] - indptr[rows]
    out = np.zeros((rows.shape[0], d), dtype=np.float64)
    nnz = int(lens.sum())
    if nnz == 0:
        return out
    seg_ends = np.cumsum(lens)
    seg_starts = seg_ends - lens
    pos = (
        np.arange(nnz, dtype=np.int64)
        - np.repeat(seg_starts, lens)
        + np.repeat(indptr[rows], lens)
    )
    contrib = edge_w[pos][:, None] * h[indices[pos]]
    nonempty = lens > 0
    out[nonempty] = np.add.reduceat(contrib, seg_starts[nonempty], axis=0)
    return out


def int8_matmul(q, scales, x):
    """out[b, i] = scales[i] * sum_j q[i, j] * x[b, j] (dequantize on the fly)."""
    return (x @ q.T.astype(np.float64)) * scales
