"""Model parameters and the full forward/backward pass of the hybrid scorer.

The scoring pipeline is: structural embeddings from graph propagation,
semantic embeddings from the hashed text encoder, fixed-order fusion, then
the prediction head. Backward passes are hand-written per layer against a
forward tape of cached intermediates; gradients are produced for trainable
parameters only. Low-rank adapters can shadow any GNN weight and the head's
hidden layer: the frozen base never changes, and a fresh adapter (zero up
factor) leaves the effective weight identical to the base.

Variants: "hybrid" uses both sides; "gnn_only" zeroes every semantic block
of the fused vector; "text_only" zeroes the structural blocks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from fuserec import fusion, text
from fuserec.errors import DimensionError
from fuserec.fusion import PredictionHead
from fuserec.graph import InteractionGraph, layer_activations
from fuserec.kernels import csr_aggregate
from fuserec.linalg import Array, activation_grad
from fuserec.text import TokenizedCorpus

VARIANTS = ("gnn_only", "text_only", "hybrid")


@dataclass
class LoraAdapter:
    """Low-rank update W + (alpha/rank) * b @ a over a frozen base matrix."""

    a: Array  # (rank, n), random init
    b: Array  # (m, rank), zero init
    rank: int
    alpha: float


def make_adapter(shape: Tuple[int, int], rank: int, alpha: float, rng: np.random.Generator) -> LoraAdapter:
    m, n = shape
    return LoraAdapter(
        a=rng.standard_normal((rank, n)) / np.sqrt(rank),
        b=np.zeros((m, rank), dtype=np.float64),
        rank=rank,
        alpha=alpha,
    )


def lora_effective(frozen: Array, adapter: LoraAdapter) -> Array:
    if adapter.b.shape != (frozen.shape[0], adapter.rank) or adapter.a.shape != (
        adapter.rank,
        frozen.shape[1],
    ):
        raise DimensionError(
            f"adapter factors {adapter.b.shape} x {adapter.a.shape} do not match "
            f"frozen shape {frozen.shape}"
        )
    return frozen + (adapter.alpha / adapter.rank) * (adapter.b @ adapter.a)


@dataclass
class ModelParams:
    variant: str
    d_g: int
    d_s: int
    num_layers: int
    node_table: Array  # (num_nodes, d_g)
    text_table: Array  # (num_buckets, d_s)
    gnn_weights: List[Array]  # num_layers of (d_g, d_g)
    head: PredictionHead
    lora: Dict[str, LoraAdapter] = field(default_factory=dict)  # "gnn.l" / "head.hidden"
    trainable: Dict[str, bool] = field(default_factory=dict)

    @property
    def d_h(self) -> int:
        return self.head.hidden.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.node_table.shape[0]

    @property
    def fused_dim(self) -> int:
        return 2 * (self.d_g + self.d_s)

    def effective_gnn_weights(self) -> List[Array]:
        out = []
        for l, w in enumerate(self.gnn_weights):
            key = f"gnn.{l}"
            out.append(lora_effective(w, self.lora[key]) if key in self.lora else w)
        return out

    def effective_head(self) -> PredictionHead:
        if "head.hidden" not in self.lora:
            return self.head
        return PredictionHead(
            hidden=lora_effective(self.head.hidden, self.lora["head.hidden"]),
            hidden_bias=self.head.hidden_bias,
            out=self.head.out,
            out_bias=self.head.out_bias,
        )

    def param_arrays(self) -> Dict[str, Array]:
        """Every base parameter array by name (adapters listed separately)."""
        arrays = {
            "node_table": self.node_table,
            "text_table": self.text_table,
            "head.hidden": self.head.hidden,
            "head.hidden_bias": self.head.hidden_bias,
            "head.out": self.head.out,
        }
        for l, w in enumerate(self.gnn_weights):
            arrays[f"gnn.{l}"] = w
        return arrays

    def version_hash(self) -> str:
        """Digest of every parameter byte; changes iff some parameter changes."""
        digest = hashlib.sha256()
        digest.update(f"{self.variant}|{self.d_g}|{self.d_s}|{self.num_layers}".encode())
        for name in sorted(self.param_arrays()):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(self.param_arrays()[name]).tobytes())
        digest.update(np.float64(self.head.out_bias).tobytes())
        for name in sorted(self.lora):
            ad = self.lora[name]
            digest.update(f"{name}|{ad.rank}|{ad.alpha}".encode())
            digest.update(np.ascontiguousarray(ad.a).tobytes())
            digest.update(np.ascontiguousarray(ad.b).tobytes())
        return digest.hexdigest()


def init_model(
    num_nodes: int,
    variant: str = "hybrid",
    d_g: int = 32,
    d_s: int = 32,
    d_h: int = 64,
    num_layers: int = 2,
    num_buckets: int = text.DEFAULT_BUCKETS,
    seed: int = 0,
) -> ModelParams:
    """Seeded initialization; the node table is uniform in +-1/sqrt(d_g)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D6F64]))
    bound = 1.0 / np.sqrt(d_g)
    node_table = rng.uniform(-bound, bound, size=(num_nodes, d_g))
    text_table = text.make_text_table(num_buckets, d_s, int(rng.integers(2**31)))
    gnn_weights = [
        rng.uniform(-bound, bound, size=(d_g, d_g)) for _ in range(num_layers)
    ]
    head = fusion.init_head(2 * (d_g + d_s), d_h, rng)
    model = ModelParams(
        variant=variant,
        d_g=d_g,
        d_s=d_s,
        num_layers=num_layers,
        node_table=node_table,
        text_table=text_table,
        gnn_weights=gnn_weights,
        head=head,
    )
    model.trainable = default_trainable_mask(model)
    return model


def copy_model(model: ModelParams) -> ModelParams:
    """Deep copy (fresh arrays); the source is never aliased."""
    out = ModelParams(
        variant=model.variant,
        d_g=model.d_g,
        d_s=model.d_s,
        num_layers=model.num_layers,
        node_table=model.node_table.copy(),
        text_table=model.text_table.copy(),
        gnn_weights=[w.copy() for w in model.gnn_weights],
        head=model.head.copy(),
        lora={
            name: LoraAdapter(a=ad.a.copy(), b=ad.b.copy(), rank=ad.rank, alpha=ad.alpha)
            for name, ad in model.lora.items()
        },
        trainable=dict(model.trainable),
    )
    return out


def default_trainable_mask(model: ModelParams) -> Dict[str, bool]:
    mask = {name: True for name in model.param_arrays()}
    mask["head.out_bias"] = True
    if model.variant == "gnn_only":
        mask["text_table"] = False
    if model.variant == "text_only":
        mask["node_table"] = False
        for l in range(model.num_layers):
            mask[f"gnn.{l}"] = False
    return mask


def attach_lora(model: ModelParams, rank: int, alpha: float, seed: int = 0) -> None:
    """Freeze the base and add adapters on every GNN weight and head.hidden.

    Embedding tables freeze too; the head's output row and biases stay
    trainable (they are tiny). Adapter parameters are named
    ``lora.<target>.a`` / ``lora.<target>.b`` in gradients and masks.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6C6F7261]))
    for l in range(model.num_layers):
        model.lora[f"gnn.{l}"] = make_adapter(model.gnn_weights[l].shape, rank, alpha, rng)
    model.lora["head.hidden"] = make_adapter(model.head.hidden.shape, rank, alpha, rng)
    for name in list(model.trainable):
        model.trainable[name] = False
    model.trainable["head.out"] = True
    model.trainable["head.hidden_bias"] = True
    model.trainable["head.out_bias"] = True
    for name in model.lora:
        model.trainable[f"lora.{name}.a"] = True
        model.trainable[f"lora.{name}.b"] = True


def count_params(model: ModelParams, trainable_only: bool = False) -> int:
    """Exact scalar count; respects the trainable mask and LoRA freezing."""
    total = 0
    for name, arr in model.param_arrays().items():
        if not trainable_only or model.trainable.get(name, False):
            total += arr.size
    if not trainable_only or model.trainable.get("head.out_bias", False):
        total += 1  # out_bias scalar
    for name, ad in model.lora.items():
        if not trainable_only or model.trainable.get(f"lora.{name}.a", False):
            total += ad.a.size
        if not trainable_only or model.trainable.get(f"lora.{name}.b", False):
            total += ad.b.size
    return total


@dataclass
class Tape:
    """Cached intermediates of one batch forward, replayed by backward()."""

    u_nodes: np.ndarray
    i_nodes: np.ndarray
    z: Array
    head_cache: tuple
    eff_head: PredictionHead
    eff_gnn: List[Array]
    # structural side (None for text_only)
    gnn_aggs: Optional[List[Array]] = None
    gnn_pres: Optional[List[Array]] = None
    gnn_outs: Optional[List[Array]] = None
    # semantic side (None for gnn_only)
    sem_nodes: Optional[np.ndarray] = None  # unique nodes encoded
    sem_pos_u: Optional[np.ndarray] = None  # batch -> row in sem arrays
    sem_pos_i: Optional[np.ndarray] = None
    sem_vecs: Optional[Array] = None
    sem_norms: Optional[Array] = None


def forward_batch(
    model: ModelParams,
    graph: InteractionGraph,
    corpus: TokenizedCorpus,
    u_nodes: np.ndarray,
    i_nodes: np.ndarray,
    sem_cache: Optional[Array] = None,
) -> Tuple[Array, Tape]:
    """Score a batch of (user node, item node) pairs; returns (logits, tape).

    ``sem_cache`` is an optional precomputed (num_nodes, d_s) semantic matrix;
    it is only valid while the text table is frozen, and skips per-batch text
    encoding (backward then produces no text-table gradient).
    """
    b = u_nodes.shape[0]
    d_g, d_s = model.d_g, model.d_s
    z = np.zeros((b, model.fused_dim), dtype=np.float64)
    tape = Tape(
        u_nodes=u_nodes,
        i_nodes=i_nodes,
        z=z,
        head_cache=None,
        eff_head=model.effective_head(),
        eff_gnn=model.effective_gnn_weights(),
    )

    if model.variant != "text_only":
        aggs, pres, outs = layer_activations(graph, model.node_table, tape.eff_gnn)
        h = outs[-1]
        z[:, :d_g] = h[u_nodes]
        z[:, d_g + d_s : 2 * d_g + d_s] = h[i_nodes]
        tape.gnn_aggs, tape.gnn_pres, tape.gnn_outs = aggs, pres, outs

    if model.variant != "gnn_only":
        if sem_cache is not None:
            z[:, d_g : d_g + d_s] = sem_cache[u_nodes]
            z[:, 2 * d_g + d_s :] = sem_cache[i_nodes]
        else:
            nodes, inverse = np.unique(np.concatenate([u_nodes, i_nodes]), return_inverse=True)
            vecs, norms = text.encode_nodes(corpus, model.text_table, nodes)
            pos_u, pos_i = inverse[:b], inverse[b:]
            z[:, d_g : d_g + d_s] = vecs[pos_u]
            z[:, 2 * d_g + d_s :] = vecs[pos_i]
            tape.sem_nodes, tape.sem_pos_u, tape.sem_pos_i = nodes, pos_u, pos_i
            tape.sem_vecs, tape.sem_norms = vecs, norms

    logits, cache = fusion.head_forward_cached(z, tape.eff_head)
    tape.head_cache = cache
    return logits, tape


def backward_batch(
    model: ModelParams,
    graph: InteractionGraph,
    corpus: TokenizedCorpus,
    tape: Tape,
    dlogits: Array,
) -> Dict[str, object]:
    """Gradients of the scalar loss for every trainable parameter.

    Dense arrays for everything except ``text_table``, whose gradient is the
    sparse pair ``(bucket_rows, row_grads)``.
    """
    grads: Dict[str, object] = {}
    d_g, d_s = model.d_g, model.d_s

    d_hidden_eff, d_hb, d_out, d_ob, dz = fusion.head_backward(
        tape.z, tape.eff_head, tape.head_cache, dlogits
    )
    _assign_maybe_lora(model, grads, "head.hidden", d_hidden_eff, model.head.hidden)
    if model.trainable.get("head.hidden_bias"):
        grads["head.hidden_bias"] = d_hb
    if model.trainable.get("head.out"):
        grads["head.out"] = d_out
    if model.trainable.get("head.out_bias"):
        grads["head.out_bias"] = d_ob

    if model.variant != "text_only" and tape.gnn_outs is not None:
        d_h = np.zeros_like(tape.gnn_outs[-1])
        np.add.at(d_h, tape.u_nodes, dz[:, :d_g])
        np.add.at(d_h, tape.i_nodes, dz[:, d_g + d_s : 2 * d_g + d_s])
        d_out_l = d_h
        for l in range(model.num_layers - 1, -1, -1):
            kind = "identity" if l == model.num_layers - 1 else "relu"
            d_pre = d_out_l * activation_grad(tape.gnn_pres[l], kind)
            d_w_eff = tape.gnn_aggs[l].T @ d_pre
            _assign_maybe_lora(model, grads, f"gnn.{l}", d_w_eff, model.gnn_weights[l])
            if l > 0 or model.trainable.get("node_table"):
                d_agg = d_pre @ tape.eff_gnn[l].T
                # the normalized adjacency is symmetric, so its transpose
                # reuses the same aggregation kernel
                d_out_l = csr_aggregate(
                    graph.indptr, graph.indices, graph.edge_norm, d_agg
                )
        if model.trainable.get("node_table"):
            grads["node_table"] = d_out_l

    if model.variant != "gnn_only" and tape.sem_nodes is not None and model.trainable.get("text_table"):
        d_e = np.zeros_like(tape.sem_vecs)
        np.add.at(d_e, tape.sem_pos_u, dz[:, d_g : d_g + d_s])
        np.add.at(d_e, tape.sem_pos_i, dz[:, 2 * d_g + d_s :])
        grads["text_table"] = _text_table_grad(
            corpus, tape.sem_nodes, tape.sem_vecs, tape.sem_norms, d_e
        )

    return grads


def _assign_maybe_lora(
    model: ModelParams, grads: Dict[str, object], name: str, d_eff: Array, base: Array
) -> None:
    """Route an effective-weight gradient to the base matrix or its adapter."""
    if name in model.lora:
        ad = model.lora[name]
        scale = ad.alpha / ad.rank
        if model.trainable.get(f"lora.{name}.b"):
            grads[f"lora.{name}.b"] = scale * (d_eff @ ad.a.T)
        if model.trainable.get(f"lora.{name}.a"):
            grads[f"lora.{name}.a"] = scale * (ad.b.T @ d_eff)
    elif model.trainable.get(name):
        grads[name] = d_eff


def trainable_names(model: ModelParams) -> List[str]:
    """Deterministic ordering of trainable parameter names."""
    return sorted(name for name, on in model.trainable.items() if on)


def get_param(model: ModelParams, name: str) -> Array:
    if name == "head.out_bias":
        return np.asarray(model.head.out_bias, dtype=np.float64)
    if name.startswith("lora."):
        target, factor = name[5:].rsplit(".", 1)
        return getattr(model.lora[target], factor)
    return model.param_arrays()[name]


def set_param(model: ModelParams, name: str, value: Array) -> None:
    if name == "head.out_bias":
        model.head.out_bias = float(value)
        return
    if name.startswith("lora."):
        target, factor = name[5:].rsplit(".", 1)
        setattr(model.lora[target], factor, np.asarray(value, dtype=np.float64))
        return
    if name == "node_table":
        model.node_table = np.asarray(value, dtype=np.float64)
    elif name == "text_table":
        model.text_table = np.asarray(value, dtype=np.float64)
    elif name == "head.hidden":
        model.head.hidden = np.asarray(value, dtype=np.float64)
    elif name == "head.hidden_bias":
        model.head.hidden_bias = np.asarray(value, dtype=np.float64)
    elif name == "head.out":
        model.head.out = np.asarray(value, dtype=np.float64)
    elif name.startswith("gnn."):
        model.gnn_weights[int(name[4:])] = np.asarray(value, dtype=np.float64)
    else:
        raise KeyError(name)


def pack_params(model: ModelParams, names: List[str]) -> Array:
    return np.concatenate([np.ravel(get_param(model, n)) for n in names])


def unpack_params(model: ModelParams, names: List[str], vec: Array) -> None:
    offset = 0
    for n in names:
        cur = get_param(model, n)
        size = cur.size
        set_param(model, n, vec[offset : offset + size].reshape(cur.shape))
        offset += size
    if offset != vec.size:
        raise DimensionError(f"vector length {vec.size} != total parameter size {offset}")


def grads_to_vector(model: ModelParams, grads: Dict[str, object], names: List[str]) -> Array:
    """Flatten a gradient dict (densifying the sparse text-table pair)."""
    parts = []
    for n in names:
        cur = get_param(model, n)
        g = grads.get(n)
        if g is None:
            parts.append(np.zeros(cur.size, dtype=np.float64))
        elif n == "text_table":
            rows, row_grads = g
            dense = np.zeros_like(model.text_table)
            dense[rows] = row_grads
            parts.append(dense.ravel())
        else:
            parts.append(np.ravel(np.asarray(g, dtype=np.float64)))
    return np.concatenate(parts) if parts else np.empty(0)


def _text_table_grad(
    corpus: TokenizedCorpus,
    nodes: np.ndarray,
    vecs: Array,
    norms: Array,
    d_e: Array,
) -> Tuple[np.ndarray, Array]:
    """Sparse gradient for the bucket table: (unique bucket ids, row grads).

    Differentiates through the L2 normalization: for v the raw sum and
    e = v/|v|, dv = (de - e (e . de)) / |v|; empty rows contribute nothing.
    """
    safe = norms > 0
    d_v = np.zeros_like(d_e)
    if np.any(safe):
        e = vecs[safe]
        de = d_e[safe]
        d_v[safe] = (de - e * np.sum(e * de, axis=1, keepdims=True)) / norms[safe, None]

    lens = corpus.indptr[nodes + 1] - corpus.indptr[nodes]
    nnz = int(lens.sum())
    if nnz == 0:
        return np.empty(0, dtype=np.int64), np.empty((0, d_e.shape[1]), dtype=np.float64)
    seg_ends = np.cumsum(lens)
    seg_starts = seg_ends - lens
    pos = (
        np.arange(nnz, dtype=np.int64)
        - np.repeat(seg_starts, lens)
        + np.repeat(corpus.indptr[nodes], lens)
    )
    buckets = corpus.bucket_ids[pos]
    contrib = corpus.counts[pos][:, None] * np.repeat(d_v, lens, axis=0)
    order = np.argsort(buckets, kind="stable")
    buckets = buckets[order]
    contrib = contrib[order]
    uniq, starts = np.unique(buckets, return_index=True)
    row_grads = np.add.reduceat(contrib, starts, axis=0)
    return uniq, row_grads
