"""Concatenation fusion and the feedforward prediction head.

The fused representation is the fixed-order concatenation
[h_user | e_user | h_item | e_item]; a missing semantic vector is replaced
by zeros so the layout never changes. The head is one hidden relu layer
followed by a scalar sigmoid output. Ranking uses the pre-sigmoid logit
(same ordering, one transcendental less per candidate).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from fuserec.errors import DimensionError
from fuserec.linalg import Array, relu, sigmoid


@dataclass
class PredictionHead:
    hidden: Array  # (2 * (d_g + d_s), d_h)
    hidden_bias: Array  # (d_h,)
    out: Array  # (d_h,)
    out_bias: float

    @property
    def in_dim(self) -> int:
        return self.hidden.shape[0]

    def copy(self) -> "PredictionHead":
        return PredictionHead(
            self.hidden.copy(), self.hidden_bias.copy(), self.out.copy(), float(self.out_bias)
        )


def init_head(in_dim: int, d_h: int, rng: np.random.Generator) -> PredictionHead:
    bound_h = 1.0 / np.sqrt(in_dim)
    bound_o = 1.0 / np.sqrt(d_h)
    return PredictionHead(
        hidden=rng.uniform(-bound_h, bound_h, size=(in_dim, d_h)),
        hidden_bias=np.zeros(d_h, dtype=np.float64),
        out=rng.uniform(-bound_o, bound_o, size=d_h),
        out_bias=0.0,
    )


def fuse(
    h_u: Array,
    e_u: Optional[Array],
    h_i: Array,
    e_i: Optional[Array],
    d_g: int,
    d_s: int,
) -> Array:
    """[h_u | e_u | h_i | e_i]; absent semantic vectors become zeros."""
    zero_s = np.zeros(d_s, dtype=np.float64)
    parts = (h_u, e_u if e_u is not None else zero_s, h_i, e_i if e_i is not None else zero_s)
    expected = (d_g, d_s, d_g, d_s)
    for part, dim, name in zip(parts, expected, ("h_u", "e_u", "h_i", "e_i")):
        if part.shape != (dim,):
            raise DimensionError(f"{name} has shape {part.shape}, expected ({dim},)")
    return np.concatenate(parts)


def fuse_batch(
    h_mat: Optional[Array],
    e_mat: Optional[Array],
    u_nodes: np.ndarray,
    i_nodes: np.ndarray,
    d_g: int,
    d_s: int,
) -> Array:
    """Assemble fused rows from precomputed per-node tables.

    Either table may be None (that side contributes zero blocks), matching
    the single-pair rules of fuse().
    """
    b = u_nodes.shape[0]
    z = np.zeros((b, 2 * (d_g + d_s)), dtype=np.float64)
    if h_mat is not None:
        z[:, :d_g] = h_mat[u_nodes]
        z[:, d_g + d_s : 2 * d_g + d_s] = h_mat[i_nodes]
    if e_mat is not None:
        z[:, d_g : d_g + d_s] = e_mat[u_nodes]
        z[:, 2 * d_g + d_s :] = e_mat[i_nodes]
    return z


def unfuse(z: Array, d_g: int, d_s: int) -> Tuple[Array, Array, Array, Array]:
    """Slice a fused vector back into its four components."""
    if z.shape != (2 * (d_g + d_s),):
        raise DimensionError(f"fused vector has shape {z.shape}, expected ({2 * (d_g + d_s)},)")
    a, b, c = d_g, d_g + d_s, 2 * d_g + d_s
    return z[:a], z[a:b], z[b:c], z[c:]


def score_logit_batch(z: Array, head: PredictionHead) -> Array:
    """Pre-sigmoid scores for a batch of fused rows (b, in_dim) -> (b,)."""
    if z.ndim != 2 or z.shape[1] != head.in_dim:
        raise DimensionError(
            f"fused batch has shape {z.shape}, head expects (*, {head.in_dim})"
        )
    a = relu(z @ head.hidden + head.hidden_bias)
    return a @ head.out + head.out_bias


def score_logit(z: Array, head: PredictionHead) -> float:
    """Pre-sigmoid score of one fused vector."""
    return float(score_logit_batch(z[None, :], head)[0])


def predict(z: Array, head: PredictionHead) -> float:
    """Interaction score in (0, 1)."""
    return float(sigmoid(np.array([score_logit(z, head)]))[0])


def head_forward_cached(z: Array, head: PredictionHead):
    """Batch forward keeping intermediates for the backward pass."""
    pre = z @ head.hidden + head.hidden_bias
    act = relu(pre)
    logits = act @ head.out + head.out_bias
    return logits, (pre, act)


def head_backward(
    z: Array, head: PredictionHead, cache, dlogits: Array
) -> Tuple[Array, Array, Array, float, Array]:
    """Gradients (d_hidden, d_hidden_bias, d_out, d_out_bias, d_z) of the head."""
    pre, act = cache
    d_out = act.T @ dlogits
    d_out_bias = float(dlogits.sum())
    d_act = np.outer(dlogits, head.out)
    d_pre = d_act * (pre > 0.0)
    d_hidden = z.T @ d_pre
    d_hidden_bias = d_pre.sum(axis=0)
    d_z = d_pre @ head.hidden.T
    return d_hidden, d_hidden_bias, d_out, d_out_bias, d_z
