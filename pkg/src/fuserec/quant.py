"""Post-training symmetric INT8 weight quantization.

Per-row scheme with zero-point 0: scale = max|row| / 127 (1.0 for an all-zero
row), values rounded half away from zero and clamped to [-127, 127], so -128
never appears. Only weight matrices are quantized; activations and embedding
tables stay in float64, which keeps the logit error bound analytic:

    |quantized logit - full logit| <= sum over rows of (scale/2) * L1(input to that row)

propagated through relu (1-Lipschitz) into the output layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fuserec import kernels
from fuserec.errors import DimensionError
from fuserec.fusion import PredictionHead
from fuserec.linalg import Array


@dataclass
class QuantizedMatrix:
    rows: int
    cols: int
    qvalues: np.ndarray  # int8, shape (rows, cols)
    scales: np.ndarray  # float64, shape (rows,)


def _round_half_away(x: Array) -> Array:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_per_row(w: Array) -> QuantizedMatrix:
    """Quantize a (rows, cols) float matrix row by row."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise DimensionError("quantize_per_row expects a 2-D matrix")
    if not np.isfinite(w).all():
        raise ValueError("matrix contains non-finite entries")
    absmax = np.abs(w).max(axis=1)
    scales = np.where(absmax > 0.0, absmax / 127.0, 1.0)
    q = _round_half_away(w / scales[:, None])
    q = np.clip(q, -127, 127).astype(np.int8)
    return QuantizedMatrix(rows=w.shape[0], cols=w.shape[1], qvalues=q, scales=scales)


def dequantize(q: QuantizedMatrix) -> Array:
    return q.qvalues.astype(np.float64) * q.scales[:, None]


@dataclass
class QuantizedHead:
    """Prediction head with both layers in INT8 (biases stay float)."""

    hidden: QuantizedMatrix  # quantized per OUTPUT unit: rows = d_h, cols = in_dim
    hidden_bias: Array
    out: QuantizedMatrix  # rows = 1, cols = d_h
    out_bias: float

    @property
    def in_dim(self) -> int:
        return self.hidden.qvalues.shape[1]


def quantize_head(head: PredictionHead) -> QuantizedHead:
    # Rows of the quantized matrices are the head's output units so each
    # unit gets its own scale; head.hidden is stored (in_dim, d_h), hence .T.
    return QuantizedHead(
        hidden=quantize_per_row(head.hidden.T),
        hidden_bias=head.hidden_bias.copy(),
        out=quantize_per_row(head.out[None, :]),
        out_bias=float(head.out_bias),
    )


def qscore_logit_batch(z: Array, qhead: QuantizedHead) -> Array:
    """Batch pre-sigmoid scores using dequantize-on-the-fly integer weights."""
    if z.ndim != 2 or z.shape[1] != qhead.in_dim:
        raise DimensionError(
            f"fused batch has shape {z.shape}, quantized head expects (*, {qhead.in_dim})"
        )
    pre = kernels.int8_matmul(qhead.hidden.qvalues, qhead.hidden.scales, z)
    act = np.maximum(pre + qhead.hidden_bias, 0.0)
    out = kernels.int8_matmul(qhead.out.qvalues, qhead.out.scales, act)
    return out[:, 0] + qhead.out_bias


def qscore_logit(z: Array, qhead: QuantizedHead) -> float:
    return float(qscore_logit_batch(z[None, :], qhead)[0])


def qscore(z: Array, qhead: QuantizedHead) -> float:
    """Interaction score in (0, 1) from the quantized head."""
    logit = qscore_logit(z, qhead)
    return float(1.0 / (1.0 + np.exp(-logit)))


def logit_error_bound(z: Array, head: PredictionHead, qhead: QuantizedHead) -> float:
    """Analytic bound on |quantized logit - full logit| for one fused vector.

    Each quantized row is off by at most scale/2 per weight, so a row's
    pre-activation error is at most (scale/2) * L1(row input). Relu is
    1-Lipschitz, so hidden errors pass through undamped; the output row adds
    its own quantization error plus the full-precision |out| applied to the
    hidden errors.
    """
    hidden_err = 0.5 * qhead.hidden.scales * np.abs(z).sum()
    full_pre = z @ head.hidden + head.hidden_bias
    full_act = np.maximum(full_pre, 0.0)
    out_row = np.abs(dequantize(qhead.out)[0])
    # logit~ - logit = o~ . (act~ - act) + (o~ - o) . act, bounded termwise.
    return float(out_row @ hidden_err + 0.5 * qhead.out.scales[0] * np.abs(full_act).sum())
