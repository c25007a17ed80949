"""Top-K serving with a cold path (full recompute) and a hot path (cache).

Cold requests recompute embeddings for the touched nodes only, walking the
layer frontier backwards (neighbors of neighbors ...) and reusing one
preallocated node-width buffer: each layer reads exactly the rows the
previous layer just wrote, so the buffer never needs clearing between
requests. Hot requests look embeddings up in a precomputed cache and only
run the prediction head.

A stale cache (built from different parameters than the served model) is an
error in hot mode, never a silent fallback. Latency is measured around
scoring + selection only, on a monotonic clock.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from fuserec import quant, text
from fuserec.errors import StaleCacheError
from fuserec.fusion import PredictionHead, fuse_batch, score_logit_batch
from fuserec.graph import InteractionGraph, encode
from fuserec.kernels import csr_aggregate_rows
from fuserec.linalg import Array, apply_activation
from fuserec.metrics import LatencyStats, latency_stats
from fuserec.model import ModelParams
from fuserec.text import TokenizedCorpus


@dataclass
class EmbeddingCache:
    structural: Array  # (num_nodes, d_g), final propagation layer
    semantic: Array  # (num_nodes, d_s)
    model_version: str


@dataclass
class LatencySample:
    request_id: int
    mode: str  # "cold" | "hot"
    elapsed_ms: float


def precompute(model: ModelParams, graph: InteractionGraph, corpus: TokenizedCorpus) -> EmbeddingCache:
    """Ahead-of-time embeddings for every node, tagged with the model version.

    Sides the variant never reads are stored as zeros (that is exactly what
    scoring would use).
    """
    if model.variant != "text_only":
        structural = encode(graph, model.node_table, model.effective_gnn_weights())
    else:
        structural = np.zeros((graph.num_nodes, model.d_g), dtype=np.float64)
    if model.variant != "gnn_only":
        semantic, _ = text.encode_nodes(corpus, model.text_table)
    else:
        semantic = np.zeros((graph.num_nodes, model.d_s), dtype=np.float64)
    return EmbeddingCache(structural=structural, semantic=semantic, model_version=model.version_hash())


def neighbors_of_set(graph: InteractionGraph, nodes: np.ndarray) -> np.ndarray:
    """Unique sorted neighbors of a node set (one bipartite hop)."""
    lens = graph.indptr[nodes + 1] - graph.indptr[nodes]
    nnz = int(lens.sum())
    if nnz == 0:
        return np.empty(0, dtype=np.int64)
    seg_starts = np.cumsum(lens) - lens
    pos = (
        np.arange(nnz, dtype=np.int64)
        - np.repeat(seg_starts, lens)
        + np.repeat(graph.indptr[nodes], lens)
    )
    return np.unique(graph.indices[pos])


class Server:
    """Scoring context bound to one model snapshot.

    Expensive derived state (version hash, effective weights, optional INT8
    head, cold-path scratch buffer) is computed once at construction, not per
    request. ``quantize=True`` serves through per-row INT8 weights: the head
    scores via the integer path, GNN weights propagate as their dequantized
    values.
    """

    def __init__(
        self,
        model: ModelParams,
        graph: InteractionGraph,
        corpus: TokenizedCorpus,
        cache: Optional[EmbeddingCache] = None,
        quantize: bool = False,
    ):
        self.model = model
        self.graph = graph
        self.corpus = corpus
        self.cache = cache
        self.model_version = model.version_hash()
        self.head: PredictionHead = model.effective_head()
        self.qhead = quant.quantize_head(self.head) if quantize else None
        eff = model.effective_gnn_weights()
        if quantize:
            eff = [quant.dequantize(quant.quantize_per_row(w)) for w in eff]
        self.gnn_weights = eff
        # cold-path scratch; rows are only ever read after being written
        # within the same request
        self._h_buf = np.empty((graph.num_nodes, model.d_g), dtype=np.float64)

    def build_cache(self) -> EmbeddingCache:
        """Cache consistent with this server's (possibly quantized) weights."""
        if self.model.variant != "text_only":
            structural = encode(self.graph, self.model.node_table, self.gnn_weights)
        else:
            structural = np.zeros((self.graph.num_nodes, self.model.d_g), dtype=np.float64)
        if self.model.variant != "gnn_only":
            semantic, _ = text.encode_nodes(self.corpus, self.model.text_table)
        else:
            semantic = np.zeros((self.graph.num_nodes, self.model.d_s), dtype=np.float64)
        self.cache = EmbeddingCache(structural, semantic, self.model_version)
        return self.cache

    def _cold_structural(self, touched: np.ndarray) -> Array:
        """Final-layer embeddings for ``touched``, recomputed frontier-first."""
        graph, model = self.graph, self.model
        frontiers = [touched]
        for _ in range(model.num_layers):
            frontiers.append(neighbors_of_set(graph, frontiers[-1]))
        frontiers.reverse()  # frontiers[l] = rows whose h^(l) is needed
        buf = self._h_buf
        buf[frontiers[0]] = model.node_table[frontiers[0]]
        for l in range(1, len(frontiers)):
            rows = frontiers[l]
            agg = csr_aggregate_rows(graph.indptr, graph.indices, graph.edge_norm, buf, rows)
            kind = "identity" if l == model.num_layers else "relu"
            buf[rows] = apply_activation(agg @ self.gnn_weights[l - 1], kind)
        return buf[touched].copy()

    def _score(self, z: Array) -> Array:
        if self.qhead is not None:
            return quant.qscore_logit_batch(z, self.qhead)
        return score_logit_batch(z, self.head)

    def topk(
        self,
        user: int,
        k: int,
        mode: str,
        candidates: Sequence[int],
        request_id: int = 0,
    ) -> Tuple[np.ndarray, LatencySample]:
        """Rank candidates for a user; ties broken by ascending item id."""
        cand = np.asarray(candidates, dtype=np.int64)
        if cand.size == 0:
            raise ValueError("candidates must be non-empty")
        if mode not in ("cold", "hot"):
            raise ValueError(f"mode must be cold|hot, got {mode!r}")
        if mode == "hot":
            if self.cache is None or self.cache.model_version != self.model_version:
                raise StaleCacheError(
                    "hot mode requires a cache built from the served parameters"
                )
        model = self.model
        t0 = time.perf_counter()
        u_rep = np.full(cand.size, user, dtype=np.int64)
        if mode == "hot":
            z = fuse_batch(
                self.cache.structural, self.cache.semantic, u_rep, cand, model.d_g, model.d_s
            )
        else:
            touched = np.unique(np.concatenate([[user], cand]))
            h_rows: Optional[Array] = None
            e_rows: Optional[Array] = None
            pos = np.searchsorted(touched, np.concatenate([[user], cand]))
            if model.variant != "text_only":
                h_touched = self._cold_structural(touched)
                h_rows = h_touched[pos]
            if model.variant != "gnn_only":
                e_touched, _ = text.encode_nodes(self.corpus, model.text_table, touched)
                e_rows = e_touched[pos]
            b = cand.size
            idx = np.arange(1, b + 1)
            z = np.zeros((b, model.fused_dim), dtype=np.float64)
            d_g, d_s = model.d_g, model.d_s
            if h_rows is not None:
                z[:, :d_g] = h_rows[0]
                z[:, d_g + d_s : 2 * d_g + d_s] = h_rows[idx]
            if e_rows is not None:
                z[:, d_g : d_g + d_s] = e_rows[0]
                z[:, 2 * d_g + d_s :] = e_rows[idx]
        logits = self._score(z)
        order = np.lexsort((cand, -logits))
        top = cand[order[: min(k, cand.size)]]
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        return top, LatencySample(request_id=request_id, mode=mode, elapsed_ms=elapsed_ms)


def serve_topk(
    user: int,
    k: int,
    mode: str,
    candidates: Sequence[int],
    model: ModelParams,
    graph: InteractionGraph,
    corpus: TokenizedCorpus,
    cache: Optional[EmbeddingCache] = None,
) -> Tuple[np.ndarray, LatencySample]:
    """One-shot form of Server.topk for callers without a serving context."""
    return Server(model, graph, corpus, cache=cache).topk(user, k, mode, candidates)


def run_latency_trial(
    server: Server,
    users: np.ndarray,
    candidate_sets: Dict[int, np.ndarray],
    mode: str,
    k: int,
    n_requests: int,
    warmup: int,
    seed: int,
) -> LatencyStats:
    """Sequential single-thread trial; warmup requests are not measured.

    The user sequence is drawn uniformly from ``users`` with a fixed seed,
    so two trials over the same inputs replay identical requests.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6C6174]))
    picks = rng.integers(0, users.size, size=warmup + n_requests)
    samples = []
    for req, pick in enumerate(picks):
        user = int(users[pick])
        _, sample = server.topk(user, k, mode, candidate_sets[user], request_id=req)
        if req >= warmup:
            samples.append(sample.elapsed_ms)
    return latency_stats(samples)
